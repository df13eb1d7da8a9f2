"""Returns ingestion and training-set construction.

Two sources feed the workbench: CSV panels of daily returns, and a synthetic
factor market (one market factor, a few sector factors, idiosyncratic noise)
whose default loadings are tuned so the pooled pairwise correlation lands
near the 0.36 level typical of equity universes.  Either way, the dataset
builder cuts rolling windows, draws random sub-universes, estimates a
correlation matrix per draw, canonicalizes it, and writes corrmat-csv files
plus a manifest.
"""

from __future__ import annotations

import datetime
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import matio
from .canonical import canonicalize
from .core import (
    CorrelationMatrix,
    DegenerateDataError,
    ReturnsPanel,
    StructuralError,
    estimate_correlation,
)
from .rng import MAX_SEED, generator

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PanelLoadResult:
    panel: ReturnsPanel
    rows_total: int
    rows_dropped: int


def load_returns_csv(path) -> PanelLoadResult:
    """Parse `date,TICKER,...` CSV into a panel.

    Rows with any missing value (empty field or NaN) are dropped and counted;
    rows that fail to parse raise with the offending line number.
    """
    path = Path(path)
    with open(path) as fh:
        lines = [line.rstrip("\n") for line in fh]
    lines = [line for line in lines if line.strip()]
    if not lines:
        raise StructuralError(f"{path}: empty returns file")
    header = [c.strip() for c in lines[0].split(",")]
    if len(header) < 3 or header[0].lower() != "date":
        raise StructuralError(
            f"{path}: header must be 'date,<ticker>,...' with >= 2 tickers"
        )
    tickers = tuple(header[1:])
    if len(set(tickers)) != len(tickers):
        dupes = sorted({t for t in tickers if tickers.count(t) > 1})
        raise StructuralError(f"{path}: duplicate tickers {dupes}")
    dates = []
    rows = []
    dropped = 0
    for lineno, line in enumerate(lines[1:], 2):
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != len(header):
            raise StructuralError(
                f"{path}:{lineno}: {len(cells)} fields, expected {len(header)}"
            )
        if any(c == "" for c in cells):
            dropped += 1
            continue
        try:
            day = datetime.date.fromisoformat(cells[0])
        except ValueError as exc:
            raise StructuralError(f"{path}:{lineno}: bad date {cells[0]!r}") from exc
        try:
            values = np.array([float(c) for c in cells[1:]])
        except ValueError as exc:
            raise StructuralError(f"{path}:{lineno}: bad number ({exc})") from exc
        if not np.isfinite(values).all():
            dropped += 1
            continue
        dates.append(day)
        rows.append(values)
    total = len(lines) - 1
    if len(rows) < 2:
        raise DegenerateDataError(
            f"{path}: {len(rows)} usable rows after dropping {dropped}; need >= 2"
        )
    panel = ReturnsPanel(tickers, tuple(dates), np.array(rows))
    if dropped:
        logger.info("%s: dropped %d of %d rows with missing values", path, dropped, total)
    return PanelLoadResult(panel=panel, rows_total=total, rows_dropped=dropped)


def rolling_windows(p: ReturnsPanel, window: int = 252, stride: int | None = None) -> list:
    """Contiguous windows of `window` days, start offsets `stride` apart
    (default: non-overlapping)."""
    if window < 2:
        raise StructuralError(f"window must be >= 2, got {window}")
    if window > p.n_days:
        raise StructuralError(
            f"window {window} exceeds panel length {p.n_days}"
        )
    if stride is None:
        stride = window
    if stride < 1:
        raise StructuralError(f"stride must be >= 1, got {stride}")
    out = []
    for start in range(0, p.n_days - window + 1, stride):
        sl = slice(start, start + window)
        out.append(
            ReturnsPanel(p.tickers, p.dates[sl], p.returns[sl], p.return_kind)
        )
    return out


def random_subuniverse(p: ReturnsPanel, k: int, seed: int) -> ReturnsPanel:
    """k tickers drawn without replacement, in draw order."""
    rng = generator(seed)
    return _subuniverse(p, k, rng)


def _subuniverse(p: ReturnsPanel, k: int, rng: np.random.Generator) -> ReturnsPanel:
    if not 2 <= k <= p.n_assets:
        raise StructuralError(
            f"sub-universe size {k} not in [2, {p.n_assets}]"
        )
    idx = rng.choice(p.n_assets, size=k, replace=False)
    tickers = tuple(p.tickers[i] for i in idx)
    return ReturnsPanel(tickers, p.dates, p.returns[:, idx], p.return_kind)


@dataclass(frozen=True)
class FactorMarketParams:
    """One market factor, even sector blocks, independent noise.

    Default loadings put roughly a third of single-asset variance on the
    market and a seventh on the sector, which lands the pooled pairwise
    correlation near 0.36 for the default universe.
    """

    n_assets: int = 20
    n_days: int = 252
    n_sectors: int = 4
    market_vol: float = 0.01
    sector_loading: float = 0.0066
    idio_vol: float = 0.0118
    market_beta_range: tuple = (0.5, 1.5)
    seed: int = 0

    def __post_init__(self):
        if self.n_assets < 2:
            raise StructuralError(f"n_assets must be >= 2, got {self.n_assets}")
        if self.n_days < 2:
            raise StructuralError(f"n_days must be >= 2, got {self.n_days}")
        if not 1 <= self.n_sectors <= self.n_assets:
            raise StructuralError(
                f"n_sectors must be in [1, {self.n_assets}], got {self.n_sectors}"
            )
        if self.market_vol <= 0.0 or self.idio_vol <= 0.0:
            raise StructuralError("market_vol and idio_vol must be > 0")
        if self.sector_loading < 0.0:
            raise StructuralError("sector_loading must be >= 0")
        lo, hi = self.market_beta_range
        if lo > hi:
            raise StructuralError(f"beta range {self.market_beta_range} has low > high")
        if not 0 <= self.seed <= MAX_SEED:
            raise StructuralError("seed must be a 64-bit unsigned integer")


def sector_assignment(n_assets: int, n_sectors: int) -> np.ndarray:
    """Contiguous, as-even-as-possible sector blocks."""
    return (np.arange(n_assets) * n_sectors) // n_assets


def synth_factor_market(params: FactorMarketParams) -> ReturnsPanel:
    """r_it = beta_i * m_t + sector_loading * s_{sector(i),t} + eps_it."""
    rng = generator(params.seed)
    n, t = params.n_assets, params.n_days
    lo, hi = params.market_beta_range
    beta = rng.uniform(lo, hi, n) if hi > lo else np.full(n, float(lo))
    market = rng.normal(0.0, params.market_vol, t)
    sectors = rng.normal(0.0, 1.0, (params.n_sectors, t))
    noise = rng.normal(0.0, params.idio_vol, (t, n))
    which = sector_assignment(n, params.n_sectors)
    returns = (
        market[:, None] * beta[None, :]
        + params.sector_loading * sectors[which, :].T
        + noise
    )
    tickers = tuple(f"A{i:03d}" for i in range(n))
    start = datetime.date(2020, 1, 1)
    dates = tuple(start + datetime.timedelta(days=i) for i in range(t))
    return ReturnsPanel(tickers, dates, returns)


@dataclass(frozen=True)
class DatasetManifest:
    directory: str
    source: str
    window_days: int
    universe_size: int
    matrix_count: int
    canonicalized: bool
    seed: int
    files: tuple


def draw_dataset_matrices(
    p: ReturnsPanel,
    window: int,
    stride: int | None,
    universe_size: int,
    target_count: int,
    seed: int,
) -> list:
    """Random (window, sub-universe) draws -> canonicalized correlation matrices."""
    if target_count < 1:
        raise StructuralError(f"target_count must be >= 1, got {target_count}")
    windows = rolling_windows(p, window, stride)
    rng = generator(seed)
    out: list[CorrelationMatrix] = []
    attempts = 0
    max_attempts = 50 * target_count
    while len(out) < target_count:
        if attempts >= max_attempts:
            raise DegenerateDataError(
                f"only {len(out)} of {target_count} draws usable after "
                f"{max_attempts} attempts; data too degenerate"
            )
        attempts += 1
        w = windows[int(rng.integers(len(windows)))]
        sub = _subuniverse(w, universe_size, rng)
        try:
            c = estimate_correlation(sub)
        except DegenerateDataError:
            # a flat column in this draw; skip it and draw again
            continue
        out.append(canonicalize(c))
    return out


def build_dataset(
    p: ReturnsPanel,
    out_dir,
    window: int = 252,
    stride: int | None = None,
    universe_size: int = 20,
    target_count: int = 100,
    seed: int = 0,
    source: str = "returns-csv",
) -> DatasetManifest:
    """Draw matrices and write them with a manifest; see draw_dataset_matrices."""
    mats = draw_dataset_matrices(p, window, stride, universe_size, target_count, seed)
    names = matio.write_matrix_dir(
        out_dir,
        [m.values for m in mats],
        manifest_extra=[
            ("source", source),
            ("window_days", window),
            ("universe_size", universe_size),
            ("canonicalized", "true"),
            ("seed", seed),
        ],
    )
    return DatasetManifest(
        directory=str(out_dir),
        source=source,
        window_days=window,
        universe_size=universe_size,
        matrix_count=len(names),
        canonicalized=True,
        seed=seed,
        files=tuple(names),
    )
