"""Stylized facts of financial correlation matrices, and the comparative report.

The five facts checked here: pairwise correlations shifted positive;
eigenvalue spectrum with a dominant market mode over a Marchenko-Pastur-like
bulk; Perron-Frobenius property of the first eigenvector; hierarchical
cluster structure (cophenetic correlation); scale-free-ish minimum spanning
tree degrees.  `stylized_report` computes all of them on a reference set and
a candidate set and issues per-fact verdicts against declared thresholds.

Every matrix is canonicalized before statistics are computed, which makes
the whole report bitwise invariant under relabeling of any input matrix
(for generic matrices without exact value ties).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats as scipy_stats

from .canonical import canonicalize, cophenetic_distances, correlation_distance, single_linkage
from .core import (
    CorrelationMatrix,
    CorrganError,
    DegenerateDataError,
    StructuralError,
    upper_coeffs,
)

HIST_BINS = 50
TRACE_TOL = 1e-8


# ---------------------------------------------------------------- spectrum


@dataclass(frozen=True)
class MarchenkoPasturParams:
    q: float
    sigma2: float
    lambda_minus: float
    lambda_plus: float

    def __post_init__(self):
        if self.q <= 0.0:
            raise StructuralError(f"aspect ratio q must be > 0, got {self.q}")
        if self.sigma2 <= 0.0:
            raise StructuralError(f"sigma2 must be > 0, got {self.sigma2}")
        lo = self.sigma2 * (1.0 - np.sqrt(self.q)) ** 2
        hi = self.sigma2 * (1.0 + np.sqrt(self.q)) ** 2
        if abs(lo - self.lambda_minus) > 1e-12 or abs(hi - self.lambda_plus) > 1e-12:
            raise StructuralError(
                "bulk edges inconsistent with (q, sigma2): "
                f"expected ({lo!r}, {hi!r}), got ({self.lambda_minus!r}, {self.lambda_plus!r})"
            )
        if not self.lambda_minus < self.lambda_plus:
            raise StructuralError("lambda_minus must be < lambda_plus")

    @classmethod
    def from_ratio(cls, q: float, sigma2: float = 1.0) -> "MarchenkoPasturParams":
        lo = sigma2 * (1.0 - np.sqrt(q)) ** 2
        hi = sigma2 * (1.0 + np.sqrt(q)) ** 2
        return cls(q=q, sigma2=sigma2, lambda_minus=lo, lambda_plus=hi)


def marchenko_pastur_density(p: MarchenkoPasturParams, lam: float) -> float:
    """Bulk eigenvalue density: sqrt((l+ - x)(x - l-)) / (2 pi q sigma2 x)."""
    if lam <= p.lambda_minus or lam >= p.lambda_plus or lam <= 0.0:
        return 0.0
    num = np.sqrt((p.lambda_plus - lam) * (lam - p.lambda_minus))
    return float(num / (2.0 * np.pi * p.q * p.sigma2 * lam))


@dataclass(frozen=True)
class SpectrumSummary:
    eigenvalues: np.ndarray  # descending
    first_eigenvector: np.ndarray  # unit norm, entry sum >= 0
    lambda1_share: float
    outlier_count: int | None  # eigenvalues above lambda_plus; None without MP params

    def __post_init__(self):
        w = np.asarray(self.eigenvalues, dtype=np.float64)
        v = np.asarray(self.first_eigenvector, dtype=np.float64)
        n = w.size
        if abs(float(w.sum()) - n) > TRACE_TOL:
            raise CorrganError(
                f"eigenvalue sum {w.sum()!r} deviates from trace {n} beyond {TRACE_TOL}"
            )
        if abs(float(np.linalg.norm(v)) - 1.0) > 1e-10:
            raise CorrganError("first eigenvector is not unit norm")
        object.__setattr__(self, "eigenvalues", w)
        object.__setattr__(self, "first_eigenvector", v)


def eigen_spectrum(
    m: CorrelationMatrix, mp: MarchenkoPasturParams | None = None
) -> SpectrumSummary:
    """Descending spectrum with the sign-normalized dominant eigenvector."""
    try:
        w, v = np.linalg.eigh(m.values)
    except np.linalg.LinAlgError as exc:
        raise CorrganError(f"eigendecomposition failed: {exc}") from exc
    w = w[::-1]
    top = v[:, -1]
    if float(top.sum()) < 0.0:
        top = -top
    outliers = None
    if mp is not None:
        outliers = int(np.count_nonzero(w > mp.lambda_plus))
    return SpectrumSummary(
        eigenvalues=w,
        first_eigenvector=top,
        lambda1_share=float(w[0]) / m.n,
        outlier_count=outliers,
    )


@dataclass(frozen=True)
class PerronFrobeniusResult:
    passes: bool
    min_entry: float
    degenerate: bool  # lambda1 - lambda2 < 1e-10: dominant eigenvector ill-defined


def perron_frobenius_check(m: CorrelationMatrix) -> PerronFrobeniusResult:
    """True iff every entry of the dominant eigenvector is strictly positive."""
    spec = eigen_spectrum(m)
    w = spec.eigenvalues
    degenerate = bool(m.n > 1 and (w[0] - w[1]) < 1e-10)
    min_entry = float(spec.first_eigenvector.min())
    return PerronFrobeniusResult(
        passes=bool(min_entry > 0.0), min_entry=min_entry, degenerate=degenerate
    )


# ---------------------------------------------------------------- MST


@dataclass(frozen=True)
class PowerLawFit:
    degenerate: bool
    exponent: float | None = None
    slope: float | None = None
    r2: float | None = None
    fit_min_degree: int | None = None
    fit_max_degree: int | None = None
    n_samples: int = 0


@dataclass(frozen=True)
class MstSummary:
    edges: tuple  # (i, j, distance), Kruskal acceptance order
    degrees: np.ndarray
    degree_histogram: dict
    power_law: PowerLawFit

    def __post_init__(self):
        n = self.degrees.size
        if len(self.edges) != n - 1:
            raise CorrganError(f"MST must have {n - 1} edges, got {len(self.edges)}")
        if int(self.degrees.sum()) != 2 * (n - 1):
            raise CorrganError("MST degree sum must be 2(n-1)")


def mst(m: CorrelationMatrix) -> MstSummary:
    """Kruskal on d = sqrt(2(1-rho)); ties broken by lexicographic (i, j)."""
    d = correlation_distance(m)
    n = m.n
    iu = np.triu_indices(n, 1)
    order = sorted(zip(d[iu], iu[0].tolist(), iu[1].tolist()))
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    edges = []
    degrees = np.zeros(n, dtype=np.intp)
    for dist, i, j in order:
        ri, rj = find(i), find(j)
        if ri == rj:
            continue
        parent[ri] = rj
        edges.append((i, j, float(dist)))
        degrees[i] += 1
        degrees[j] += 1
        if len(edges) == n - 1:
            break
    hist = dict(sorted(Counter(degrees.tolist()).items()))
    return MstSummary(
        edges=tuple(edges),
        degrees=degrees,
        degree_histogram=hist,
        power_law=power_law_fit(degrees),
    )


def power_law_fit(degree_samples) -> PowerLawFit:
    """Tail exponent from the log-log CCDF over degrees >= 2.

    For P(k) proportional to k^(-gamma) the CCDF falls like k^(1-gamma), so
    the fitted exponent is 1 minus the regression slope; this recovers a
    planted gamma (the raw negated slope would land on gamma - 1).
    """
    samples = np.asarray(degree_samples, dtype=np.float64).ravel()
    n = samples.size
    distinct = np.unique(samples)
    fit_degrees = distinct[distinct >= 2.0]
    if distinct.size < 3 or fit_degrees.size < 2 or n == 0:
        return PowerLawFit(degenerate=True, n_samples=int(n))
    ccdf = np.array([np.count_nonzero(samples >= k) / n for k in fit_degrees])
    x = np.log(fit_degrees)
    y = np.log(ccdf)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0.0 else 1.0
    return PowerLawFit(
        degenerate=False,
        exponent=float(1.0 - slope),
        slope=float(slope),
        r2=r2,
        fit_min_degree=int(fit_degrees[0]),
        fit_max_degree=int(fit_degrees[-1]),
        n_samples=int(n),
    )


# ---------------------------------------------------------------- hierarchy


@dataclass(frozen=True)
class HierarchyScore:
    score: float | None
    degenerate: bool  # zero-variance distances: cophenetic correlation undefined


def hierarchy_score(m: CorrelationMatrix) -> HierarchyScore:
    """Cophenetic correlation between d_ij and the single-linkage ultrametric."""
    d = correlation_distance(m)
    iu = np.triu_indices(m.n, 1)
    orig = d[iu]
    coph = cophenetic_distances(single_linkage(d))[iu]
    if orig.size < 2 or float(np.ptp(orig)) == 0.0 or float(np.ptp(coph)) == 0.0:
        return HierarchyScore(score=None, degenerate=True)
    r = float(np.corrcoef(orig, coph)[0, 1])
    return HierarchyScore(score=r, degenerate=False)


# ---------------------------------------------------------------- pooled stats


@dataclass(frozen=True)
class PairwiseStats:
    count: int
    mean: float
    std: float
    hist_counts: np.ndarray  # 50 bins on [-1, 1]
    bin_edges: np.ndarray
    log_density: np.ndarray  # natural log of density; -inf on empty bins


def pairwise_stats(matrices) -> PairwiseStats:
    """Mean/std/histograms pooled over all upper-triangular coefficients."""
    mats = list(matrices)
    if not mats:
        raise DegenerateDataError("pairwise_stats needs a nonempty set")
    coeffs = np.concatenate(
        [upper_coeffs(np.asarray(getattr(m, "values", m))) for m in mats]
    )
    counts, edges = np.histogram(coeffs, bins=HIST_BINS, range=(-1.0, 1.0))
    width = edges[1] - edges[0]
    density = counts / (coeffs.size * width)
    with np.errstate(divide="ignore"):
        log_density = np.log(density)
    return PairwiseStats(
        count=int(coeffs.size),
        mean=float(coeffs.mean()),
        std=float(coeffs.std()),
        hist_counts=counts,
        bin_edges=edges,
        log_density=log_density,
    )


# ---------------------------------------------------------------- report


@dataclass(frozen=True)
class FactThresholds:
    mean_diff: float = 0.05
    std_diff: float = 0.05
    lambda1_ks: float = 0.2
    pf_rate_diff: float = 0.05
    hierarchy_ks: float = 0.2
    degree_chi2: float = 10.0  # reduced chi-square on pooled degree counts
    reference_days: int = 252  # T for the Marchenko-Pastur aspect ratio q = n/T


@dataclass(frozen=True)
class SetSummary:
    count: int
    pairwise: PairwiseStats
    lambda1: np.ndarray
    lambda1_share_mean: float
    outlier_count_mean: float
    pf_pass_rate: float
    pf_degenerate_count: int
    hierarchy_scores: np.ndarray  # degenerate matrices excluded
    hierarchy_degenerate_count: int
    degree_counts: dict
    max_degree: int
    power_law: PowerLawFit


@dataclass(frozen=True)
class StylizedFactsReport:
    n: int
    thresholds: FactThresholds
    mp_q: float
    reference: SetSummary
    candidate: SetSummary
    mean_diff: float
    std_diff: float
    lambda1_ks: float
    pf_rate_diff: float
    hierarchy_ks: float
    degree_chi2: float
    degree_chi2_dof: int
    tail_caveat: str | None
    verdicts: dict = field(default_factory=dict)

    @property
    def all_pass(self) -> bool:
        return all(self.verdicts.values())


def _summarize_set(matrices, n: int, thresholds: FactThresholds) -> SetSummary:
    canon = [canonicalize(m) for m in matrices]
    pooled = pairwise_stats(canon)
    q = n / thresholds.reference_days
    lambda1 = []
    shares = []
    outliers = []
    pf_pass = 0
    pf_degen = 0
    hier = []
    hier_degen = 0
    degree_counts: Counter = Counter()
    for c in canon:
        spec = eigen_spectrum(c)
        lam1 = float(spec.eigenvalues[0])
        lambda1.append(lam1)
        shares.append(spec.lambda1_share)
        # bulk variance after removing the market mode; recorded convention
        sigma2 = max(1.0 - lam1 / n, 1e-6)
        mp = MarchenkoPasturParams.from_ratio(q, sigma2)
        outliers.append(int(np.count_nonzero(spec.eigenvalues > mp.lambda_plus)))
        pf = perron_frobenius_check(c)
        pf_pass += int(pf.passes)
        pf_degen += int(pf.degenerate)
        h = hierarchy_score(c)
        if h.degenerate:
            hier_degen += 1
        else:
            hier.append(h.score)
        degree_counts.update(mst(c).degrees.tolist())
    degree_samples = np.concatenate(
        [np.full(v, k, dtype=np.float64) for k, v in sorted(degree_counts.items())]
    )
    return SetSummary(
        count=len(canon),
        pairwise=pooled,
        lambda1=np.array(lambda1),
        lambda1_share_mean=float(np.mean(shares)),
        outlier_count_mean=float(np.mean(outliers)),
        pf_pass_rate=pf_pass / len(canon),
        pf_degenerate_count=pf_degen,
        hierarchy_scores=np.array(hier),
        hierarchy_degenerate_count=hier_degen,
        degree_counts=dict(sorted(degree_counts.items())),
        max_degree=int(max(degree_counts)),
        power_law=power_law_fit(degree_samples),
    )


def _ks_statistic(a: np.ndarray, b: np.ndarray) -> float:
    if a.size == 0 and b.size == 0:
        return 0.0
    if a.size == 0 or b.size == 0:
        return 1.0
    return float(scipy_stats.ks_2samp(a, b).statistic)


def _degree_chi_square(ref_counts: dict, cand_counts: dict):
    """Reduced chi-square of candidate degree counts against reference
    proportions; sparse bins (expected < 5) merge into their left neighbor."""
    degrees = sorted(set(ref_counts) | set(cand_counts))
    ref = np.array([ref_counts.get(k, 0) for k in degrees], dtype=np.float64)
    cand = np.array([cand_counts.get(k, 0) for k in degrees], dtype=np.float64)
    expected = ref * (cand.sum() / ref.sum())
    exp_bins: list = []
    obs_bins: list = []
    for e, o in zip(expected, cand):
        if exp_bins and (exp_bins[-1] < 5.0 or e < 5.0):
            exp_bins[-1] += e
            obs_bins[-1] += o
        else:
            exp_bins.append(e)
            obs_bins.append(o)
    exp_arr = np.array(exp_bins)
    obs_arr = np.array(obs_bins)
    keep = exp_arr > 0.0
    exp_arr, obs_arr = exp_arr[keep], obs_arr[keep]
    dof = max(exp_arr.size - 1, 1)
    chi2 = float(np.sum((obs_arr - exp_arr) ** 2 / exp_arr))
    return chi2 / dof, dof


def stylized_report(
    reference, candidate, thresholds: FactThresholds = FactThresholds()
) -> StylizedFactsReport:
    """All five facts on both sets, with verdicts against the thresholds."""
    ref_list, cand_list = list(reference), list(candidate)
    if not ref_list or not cand_list:
        raise DegenerateDataError("both sets must be nonempty")
    n = ref_list[0].n
    for m in (*ref_list, *cand_list):
        if m.n != n:
            raise StructuralError(f"matrix sizes differ: {m.n} vs {n}")
    ref = _summarize_set(ref_list, n, thresholds)
    cand = _summarize_set(cand_list, n, thresholds)
    mean_diff = abs(ref.pairwise.mean - cand.pairwise.mean)
    std_diff = abs(ref.pairwise.std - cand.pairwise.std)
    lambda1_ks = _ks_statistic(ref.lambda1, cand.lambda1)
    pf_rate_diff = abs(ref.pf_pass_rate - cand.pf_pass_rate)
    hierarchy_ks = _ks_statistic(ref.hierarchy_scores, cand.hierarchy_scores)
    chi2, dof = _degree_chi_square(ref.degree_counts, cand.degree_counts)
    tail_caveat = None
    if cand.max_degree < ref.max_degree:
        tail_caveat = (
            f"candidate max MST degree {cand.max_degree} < reference "
            f"{ref.max_degree}: high-degree hubs under-represented"
        )
    verdicts = {
        "pairwise_mean": mean_diff <= thresholds.mean_diff,
        "pairwise_std": std_diff <= thresholds.std_diff,
        "lambda1_ks": lambda1_ks <= thresholds.lambda1_ks,
        "perron_frobenius": pf_rate_diff <= thresholds.pf_rate_diff,
        "hierarchy_ks": hierarchy_ks <= thresholds.hierarchy_ks,
        "mst_degrees_chi2": chi2 <= thresholds.degree_chi2,
    }
    return StylizedFactsReport(
        n=n,
        thresholds=thresholds,
        mp_q=n / thresholds.reference_days,
        reference=ref,
        candidate=cand,
        mean_diff=mean_diff,
        std_diff=std_diff,
        lambda1_ks=lambda1_ks,
        pf_rate_diff=pf_rate_diff,
        hierarchy_ks=hierarchy_ks,
        degree_chi2=chi2,
        degree_chi2_dof=dof,
        tail_caveat=tail_caveat,
        verdicts=verdicts,
    )


def render_report(report: StylizedFactsReport) -> str:
    """Line-oriented `key = value` text, sectioned by key prefix."""
    lines = ["# stylized-facts report", f"n = {report.n}", f"mp_q = {report.mp_q!r}"]

    def fact(section, **kv):
        lines.append(f"# ---- {section} ----")
        for k, v in kv.items():
            if isinstance(v, float):
                v = format(v, ".6g")
            lines.append(f"{section}.{k} = {v}")

    t = report.thresholds
    fact(
        "thresholds",
        mean_diff=t.mean_diff,
        std_diff=t.std_diff,
        lambda1_ks=t.lambda1_ks,
        pf_rate_diff=t.pf_rate_diff,
        hierarchy_ks=t.hierarchy_ks,
        degree_chi2=t.degree_chi2,
        reference_days=t.reference_days,
    )
    for label, s in (("reference", report.reference), ("candidate", report.candidate)):
        fact(
            label,
            count=s.count,
            pairwise_mean=s.pairwise.mean,
            pairwise_std=s.pairwise.std,
            lambda1_mean=float(s.lambda1.mean()),
            lambda1_share_mean=s.lambda1_share_mean,
            outlier_count_mean=s.outlier_count_mean,
            pf_pass_rate=s.pf_pass_rate,
            pf_degenerate_count=s.pf_degenerate_count,
            hierarchy_mean=(
                float(s.hierarchy_scores.mean()) if s.hierarchy_scores.size else "nan"
            ),
            hierarchy_degenerate_count=s.hierarchy_degenerate_count,
            max_degree=s.max_degree,
            power_law_exponent=(
                "degenerate" if s.power_law.degenerate else format(s.power_law.exponent, ".6g")
            ),
        )
    fact(
        "comparison",
        mean_diff=report.mean_diff,
        std_diff=report.std_diff,
        lambda1_ks=report.lambda1_ks,
        pf_rate_diff=report.pf_rate_diff,
        hierarchy_ks=report.hierarchy_ks,
        degree_chi2=report.degree_chi2,
        degree_chi2_dof=report.degree_chi2_dof,
        tail_caveat=report.tail_caveat or "none",
    )
    fact(
        "verdicts",
        **{k: ("pass" if v else "fail") for k, v in report.verdicts.items()},
        all=("pass" if report.all_pass else "fail"),
    )
    return "\n".join(lines) + "\n"


def dump_histograms(report: StylizedFactsReport, directory) -> list:
    """CSV histogram exports for external plotting; returns written paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for label, s in (("reference", report.reference), ("candidate", report.candidate)):
        path = directory / f"pairwise-hist-{label}.csv"
        with open(path, "w") as fh:
            fh.write("bin_left,bin_right,count,log_density\n")
            pw = s.pairwise
            for i in range(pw.hist_counts.size):
                fh.write(
                    f"{pw.bin_edges[i]:.6g},{pw.bin_edges[i + 1]:.6g},"
                    f"{int(pw.hist_counts[i])},{pw.log_density[i]:.6g}\n"
                )
        written.append(path)
        path = directory / f"mst-degrees-{label}.csv"
        with open(path, "w") as fh:
            fh.write("degree,count\n")
            for k, v in s.degree_counts.items():
                fh.write(f"{k},{v}\n")
        written.append(path)
        path = directory / f"lambda1-{label}.csv"
        with open(path, "w") as fh:
            fh.write("lambda1\n")
            for x in s.lambda1:
                fh.write(f"{x:.10g}\n")
        written.append(path)
    return written
