"""Canonical representative of a correlation matrix under asset relabeling.

Estimating correlations on n stocks gives n! equivalent matrices, one per
asset order.  This module picks one representative per equivalence class by
reordering assets along the leaves of a single-linkage dendrogram built on
d = sqrt(2(1-rho)).

Every comparison the algorithm makes is a function of matrix *values* only
(never of input indices), and every reduction sums values in sorted order, so
two relabelings of the same generic matrix produce bitwise-identical
representatives.  Exact value ties (exchangeable blocks) cannot be ordered by
values at all; they fall back to index order and are flagged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CorrelationMatrix, permute


@dataclass(frozen=True)
class Dendrogram:
    """Merge i joins node ids left/right (leaves are 0..n-1, merge i creates
    node n+i) at the given single-linkage height."""

    n_leaves: int
    merges: tuple  # ((left_id, right_id, height), ...), n-1 entries
    tie_flagged: bool = False

    def leaves_of(self, node_id: int) -> tuple:
        if node_id < self.n_leaves:
            return (node_id,)
        left, right, _ = self.merges[node_id - self.n_leaves]
        return self.leaves_of(left) + self.leaves_of(right)


def correlation_distance(m: CorrelationMatrix) -> np.ndarray:
    """d_ij = sqrt(2 (1 - rho_ij)); 0 on the diagonal, 2 at rho = -1."""
    d = np.sqrt(np.maximum(2.0 * (1.0 - m.values), 0.0))
    np.fill_diagonal(d, 0.0)
    return d


def _sorted_sum(values: np.ndarray) -> float:
    # summation in value order: permutation-invariant to the last bit
    return float(np.sum(np.sort(values)))


def _pair_profile(members: list, d: np.ndarray) -> tuple:
    """Sorted distances from the candidate pair's members to every asset; a
    value-only signature used to break merge-height ties."""
    rows = d[np.array(members)]
    return tuple(np.sort(rows.ravel()))


def single_linkage(d: np.ndarray) -> Dendrogram:
    """Naive agglomeration with a value-based tie rule.

    Among equal-distance candidate merges, the pair whose sorted
    member-distance profile compares lexicographically smallest merges first;
    exactly equal profiles (exchangeable blocks) fall back to index order and
    set ``tie_flagged``.
    """
    n = d.shape[0]
    if n == 1:
        return Dendrogram(n_leaves=1, merges=())
    active = list(range(n))  # positions into cluster tables
    node_id = list(range(n))
    leaves = [[i] for i in range(n)]
    cdist = d.astype(np.float64).copy()
    merges = []
    flagged = False
    for step in range(n - 1):
        best = None
        best_val = np.inf
        for ai in range(len(active)):
            for bi in range(ai + 1, len(active)):
                v = cdist[active[ai], active[bi]]
                if v < best_val:
                    best_val = v
                    best = [(ai, bi)]
                elif v == best_val:
                    best.append((ai, bi))
        if len(best) > 1:
            keyed = []
            for ai, bi in best:
                profile = _pair_profile(
                    leaves[active[ai]] + leaves[active[bi]], d
                )
                fallback = (
                    min(leaves[active[ai]] + leaves[active[bi]]),
                    max(min(leaves[active[ai]]), min(leaves[active[bi]])),
                )
                keyed.append((profile, fallback, (ai, bi)))
            keyed.sort(key=lambda item: (item[0], item[1]))
            if keyed[0][0] == keyed[1][0]:
                flagged = True
            ai, bi = keyed[0][2]
        else:
            ai, bi = best[0]
        a, b = active[ai], active[bi]
        merges.append((node_id[a], node_id[b], float(best_val)))
        # single linkage: distance to the merged cluster is the min
        for c in active:
            if c != a and c != b:
                v = min(cdist[a, c], cdist[b, c])
                cdist[a, c] = cdist[c, a] = v
        node_id[a] = n + step
        leaves[a] = leaves[a] + leaves[b]
        active.pop(bi)
    return Dendrogram(n_leaves=n, merges=tuple(merges), tie_flagged=flagged)


def cophenetic_distances(dend: Dendrogram) -> np.ndarray:
    """Pairwise merge heights; the single-linkage ultrametric."""
    n = dend.n_leaves
    out = np.zeros((n, n))
    for left, right, height in dend.merges:
        for i in dend.leaves_of(left):
            for j in dend.leaves_of(right):
                out[i, j] = out[j, i] = height
    return out


def _leaf_set_score(leaf_ids: tuple, values: np.ndarray) -> float:
    """Mean correlation of the set's members to the full asset universe."""
    rows = []
    n = values.shape[0]
    for i in leaf_ids:
        rows.append(np.delete(values[i], i))
    return _sorted_sum(np.concatenate(rows)) / (len(leaf_ids) * (n - 1))


def _internal_multiset(leaf_ids: tuple, values: np.ndarray) -> tuple:
    if len(leaf_ids) < 2:
        return ()
    idx = np.array(leaf_ids)
    sub = values[np.ix_(idx, idx)]
    vals = sub[np.triu_indices(len(leaf_ids), 1)]
    return tuple(np.sort(vals)[::-1])


def _ordered_leaves(dend: Dendrogram, node_id: int, values: np.ndarray, flags: list) -> list:
    if node_id < dend.n_leaves:
        return [node_id]
    left, right, _ = dend.merges[node_id - dend.n_leaves]
    l_leaves, r_leaves = dend.leaves_of(left), dend.leaves_of(right)
    l_score = _leaf_set_score(l_leaves, values)
    r_score = _leaf_set_score(r_leaves, values)
    if l_score != r_score:
        first = left if l_score > r_score else right
    else:
        l_mult, r_mult = _internal_multiset(l_leaves, values), _internal_multiset(r_leaves, values)
        if l_mult != r_mult:
            first = left if l_mult > r_mult else right
        else:
            # exchangeable children: values cannot order them
            flags.append(True)
            first = left if min(l_leaves) < min(r_leaves) else right
    second = right if first == left else left
    return _ordered_leaves(dend, first, values, flags) + _ordered_leaves(
        dend, second, values, flags
    )


def hierarchical_permutation(m: CorrelationMatrix) -> tuple:
    """Leaf order of the dendrogram under the child-ordering rule: the child
    whose leaves correlate more with the whole universe comes first."""
    perm, _ = hierarchical_permutation_flagged(m)
    return perm


def hierarchical_permutation_flagged(m: CorrelationMatrix):
    """Like :func:`hierarchical_permutation`, also reporting whether any
    exact tie forced an index-order fallback."""
    dend = single_linkage(correlation_distance(m))
    flags: list = []
    order = _ordered_leaves(dend, 2 * m.n - 2 if m.n > 1 else 0, m.values, flags)
    return tuple(int(i) for i in order), (dend.tie_flagged or bool(flags))


def canonicalize(m: CorrelationMatrix) -> CorrelationMatrix:
    """Representative of m's relabeling class: R_ij = m[perm[i], perm[j]].

    Idempotent; bitwise relabel-invariant for matrices whose values admit a
    strict ordering (no exact ties).
    """
    return permute(m, hierarchical_permutation(m))


def canonicalize_flagged(m: CorrelationMatrix):
    """Canonical representative plus the exchangeable-block tie flag."""
    perm, flagged = hierarchical_permutation_flagged(m)
    return permute(m, perm), perm, flagged
