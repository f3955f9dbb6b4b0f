"""Descriptor matching, the ratio test and the image-level match score."""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .descriptor import root_normalize
from .scalespace import PyramidParams

DEFAULT_LEAF_SIZE = 4


@dataclass(frozen=True, slots=True)
class MatchPair:
    query_idx: int
    train_idx: int
    dist_best: float
    dist_second: float
    ratio: float
    # True when train had a single descriptor, so there is no second neighbour
    degenerate: bool = False


@dataclass(frozen=True)
class SimilarityScore:
    value: float
    good_matches: int
    denom: int
    degenerate: bool = False

    @property
    def distance(self) -> float:
        return 1.0 - self.value


def _as_matrix(desc) -> np.ndarray:
    arr = np.asarray(desc, dtype=np.float64)
    if arr.size == 0:
        return arr.reshape(0, arr.shape[-1] if arr.ndim == 2 else 0)
    if arr.ndim == 1:
        arr = arr[None, :]
    return arr


def _row_distances(q: np.ndarray, train: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum((train - q) ** 2, axis=1))


def _make_pair(i: int, best: int, d1: float, d2: float) -> MatchPair:
    if math.isinf(d2):
        return MatchPair(i, best, d1, d2, 0.0, True)
    ratio = 0.0 if d2 == 0.0 else d1 / d2
    return MatchPair(i, best, d1, d2, ratio)


def _two_smallest(d: np.ndarray, idx: np.ndarray):
    """Best and second-best ``(distance, index)`` with ties resolved by lower index."""
    order = np.lexsort((idx, d))
    b = order[0]
    if len(order) == 1:
        return int(idx[b]), float(d[b]), math.inf
    return int(idx[b]), float(d[b]), float(d[order[1]])


def brute_force_knn(query, train, k: int = 2) -> list[MatchPair]:
    """Exact two nearest neighbours in Euclidean distance for every query row.

    A Gram-matrix pass shortlists candidates; the reported distances are
    always recomputed directly, so results equal an exhaustive double loop.
    """
    if k != 2:
        raise ValueError("only k = 2 is supported")
    q = _as_matrix(query)
    t = _as_matrix(train)
    n, m = len(q), len(t)
    if n == 0 or m == 0:
        return []
    if m == 1:
        return [_make_pair(i, 0, float(_row_distances(q[i], t)[0]), math.inf) for i in range(n)]

    qn = np.einsum("ij,ij->i", q, q)
    tn = np.einsum("ij,ij->i", t, t)
    approx = qn[:, None] + tn[None, :] - 2.0 * (q @ t.T)
    tol = 1e-9 * (1.0 + qn.max() + tn.max())
    kk = min(3, m)
    part = np.argpartition(approx, kk - 1, axis=1)[:, :kk]
    pv = np.take_along_axis(approx, part, axis=1)
    order = np.argsort(pv, axis=1, kind="stable")
    part = np.take_along_axis(part, order, axis=1)
    pv = np.take_along_axis(pv, order, axis=1)
    # the exact top two lie among the shortlisted pair unless the third is within tolerance
    safe = pv[:, 2] > pv[:, 1] + tol if kk == 3 else np.ones(n, dtype=bool)

    out = []
    all_idx = np.arange(m)
    for i in range(n):
        if safe[i]:
            cand = part[i, :2]
            best, d1, d2 = _two_smallest(_row_distances(q[i], t[cand]), cand)
        else:
            best, d1, d2 = _two_smallest(_row_distances(q[i], t), all_idx)
        out.append(_make_pair(i, best, d1, d2))
    return out


def ratio_test(matches, threshold: float = 0.7) -> list[MatchPair]:
    """Keep pairs with ``ratio < threshold``."""
    return [mp for mp in matches if mp.ratio < threshold]


def cross_check(ab, ba) -> list[MatchPair]:
    """Keep ``(i, j)`` from ``ab`` only if ``(j, i)`` is in ``ba``; ordered by query index."""
    back = {(mp.query_idx, mp.train_idx) for mp in ba}
    kept = [mp for mp in ab if (mp.train_idx, mp.query_idx) in back]
    return sorted(kept, key=lambda mp: mp.query_idx)


# --- k-d tree -------------------------------------------------------------------


class KDTree:
    """k-d tree over row vectors with best-bin-first search.

    Splits at the median of the highest-variance dimension until leaves hold
    at most ``leaf_size`` points. Pending branches are explored nearest
    centroid first; the axis-aligned lower bound is only used for pruning,
    which keeps an unlimited search exact.
    """

    def __init__(self, data, leaf_size: int = DEFAULT_LEAF_SIZE):
        self.data = _as_matrix(data)
        self.leaf_size = max(1, int(leaf_size))
        # node arrays: split dim (-1 for leaves), split value, children, leaf slices
        self._dim: list[int] = []
        self._val: list[float] = []
        self._left: list[int] = []
        self._right: list[int] = []
        self._lo: list[int] = []
        self._hi: list[int] = []
        self._centroid: list[np.ndarray | None] = []
        self.perm = np.arange(len(self.data))
        if len(self.data):
            self._build(0, len(self.data))

    def _new_node(self) -> int:
        for lst in (self._dim, self._left, self._right, self._lo, self._hi):
            lst.append(-1)
        self._val.append(0.0)
        self._centroid.append(None)
        return len(self._dim) - 1

    def _build(self, lo: int, hi: int) -> int:
        node = self._new_node()
        idx = self.perm[lo:hi]
        pts = self.data[idx]
        self._centroid[node] = pts.mean(axis=0)
        if hi - lo <= self.leaf_size or np.all(pts == pts[0]):
            self._lo[node], self._hi[node] = lo, hi
            return node
        dim = int(np.argmax(pts.var(axis=0)))
        order = np.argsort(pts[:, dim], kind="stable")
        self.perm[lo:hi] = idx[order]
        mid = lo + (hi - lo) // 2
        self._dim[node] = dim
        self._val[node] = float(self.data[self.perm[mid], dim])
        left = self._build(lo, mid)
        right = self._build(mid, hi)
        self._left[node], self._right[node] = left, right
        return node

    @property
    def n_leaves(self) -> int:
        return sum(1 for d in self._dim if d == -1)

    def query2(self, q: np.ndarray, leaf_budget: float = math.inf):
        """Approximate two nearest neighbours: ``(best_idx, d1, d2)``.

        Visits at most ``leaf_budget`` leaves; with an unlimited budget the
        result is exact.
        """
        best = [(math.inf, -1), (math.inf, -1)]  # (distance, index) ascending
        # (centroid distance^2, tiebreak, node, bound^2, per-dim offsets^2)
        heap = [(0.0, 0, 0, 0.0, {})]
        counter = 1
        leaves = 0
        while heap and leaves < leaf_budget:
            _, _, node, bound, offs = heapq.heappop(heap)
            if bound > best[1][0] ** 2:
                continue
            while self._dim[node] != -1:
                dim, val = self._dim[node], self._val[node]
                diff = q[dim] - val
                near, far = (self._left[node], self._right[node]) if diff < 0 else (self._right[node], self._left[node])
                new_off = diff * diff
                far_bound = bound - offs.get(dim, 0.0) + new_off
                if far_bound <= best[1][0] ** 2:
                    far_offs = dict(offs)
                    far_offs[dim] = new_off
                    key = float(np.sum((q - self._centroid[far]) ** 2))
                    heapq.heappush(heap, (key, counter, far, far_bound, far_offs))
                    counter += 1
                node = near
            leaves += 1
            ids = self.perm[self._lo[node] : self._hi[node]]
            dists = _row_distances(q, self.data[ids])
            for d, j in zip(dists.tolist(), ids.tolist()):
                if (d, j) < best[0]:
                    best = [(d, j), best[0]]
                elif (d, j) < best[1]:
                    best[1] = (d, j)
        return best[0][1], best[0][0], best[1][0]


def approx_knn(query, train, k: int = 2, leaf_budget: float = 200, leaf_size: int = DEFAULT_LEAF_SIZE) -> list[MatchPair]:
    """Two nearest neighbours through a k-d tree with a bounded number of leaf visits."""
    if k != 2:
        raise ValueError("only k = 2 is supported")
    q = _as_matrix(query)
    t = _as_matrix(train)
    if len(q) == 0 or len(t) == 0:
        return []
    tree = KDTree(t, leaf_size)
    out = []
    for i in range(len(q)):
        best, d1, d2 = tree.query2(q[i], leaf_budget)
        out.append(_make_pair(i, best, d1, d2))
    return out


# --- image-level score ------------------------------------------------------------


def _knn(a, b, p: PyramidParams):
    if p.matcher == "approx":
        return approx_knn(a, b, leaf_budget=p.leaf_budget)
    return brute_force_knn(a, b)


def good_matches(desc_a, desc_b, p: PyramidParams | None = None) -> list[MatchPair]:
    """Ratio-test survivors from A to B, symmetrized by cross-check when enabled."""
    p = p or PyramidParams()
    a = _as_matrix(desc_a)
    b = _as_matrix(desc_b)
    if len(a) == 0 or len(b) == 0:
        return []
    if p.root_kernel:
        a, b = root_normalize(a), root_normalize(b)
    ab = ratio_test(_knn(a, b, p), p.ratio_threshold)
    if not p.cross_check:
        return ab
    ba = ratio_test(_knn(b, a, p), p.ratio_threshold)
    return cross_check(ab, ba)


def lowe_similarity(desc_a, desc_b, p: PyramidParams | None = None) -> SimilarityScore:
    """Fraction of good matches over the larger of the two keypoint counts."""
    p = p or PyramidParams()
    na, nb = len(_as_matrix(desc_a)), len(_as_matrix(desc_b))
    denom = max(na, nb)
    if na == 0 or nb == 0:
        return SimilarityScore(0.0, 0, denom, degenerate=True)
    good = good_matches(desc_a, desc_b, p)
    return SimilarityScore(len(good) / denom, len(good), denom)
