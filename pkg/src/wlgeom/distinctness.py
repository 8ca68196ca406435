"""Congruence under E(3) + species-preserving permutation, and distance-multiset grading.

The congruence search is exact: every pruning rule is a necessary
condition for an alignment with RMSD <= tol, so a negative verdict is a
proof of non-congruence (up to floating point), never a heuristic miss.
If ``X`` and ``Y`` are aligned with RMSD ``e`` then every point moves by at
most ``sqrt(n) e``, so any pair distance changes by at most ``2 sqrt(n) e``.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import UnsupportedInputError, UnsupportedSizeError
from .geometry import LabeledPointCloud

EXACT_SEARCH_LIMIT = 64
DEFAULT_TOL = 1e-6


@dataclass(frozen=True)
class CongruenceVerdict:
    congruent: bool
    reason: str
    permutation: Optional[tuple[int, ...]] = None
    rotation: Optional[np.ndarray] = None
    translation: Optional[np.ndarray] = None
    rmsd: Optional[float] = None

    def __bool__(self):
        return self.congruent

    def to_dict(self) -> dict:
        d = {"congruent": self.congruent, "reason": self.reason}
        if self.congruent:
            d.update(
                permutation=list(self.permutation),
                rotation=self.rotation.tolist(),
                translation=self.translation.tolist(),
                rmsd=self.rmsd,
            )
        return d


def _require_finite(*clouds):
    for c in clouds:
        if c.is_periodic:
            raise UnsupportedInputError("congruence and multiset checks need finite clouds")


def _distances(pos):
    diff = pos[:, None, :] - pos[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def orthogonal_align(x: np.ndarray, y: np.ndarray, proper_only: bool = False):
    """Orthogonal ``R`` minimising ``|x R^T - y|`` for centered ``x``, ``y`` (Kabsch)."""
    h = x.T @ y
    u, _, vt = np.linalg.svd(h)
    r = vt.T @ u.T
    if proper_only and np.linalg.det(r) < 0:
        vt = vt.copy()
        vt[-1] *= -1
        r = vt.T @ u.T
    return r


def _subset_residual(xa, xb, idx, perm, allow_reflection):
    # best squared residual for the placed subset alone; any global alignment
    # restricted to the subset does no better
    sa = xa[idx]
    sb = xb[[perm[i] for i in idx]]
    ca, cb = sa - sa.mean(axis=0), sb - sb.mean(axis=0)
    r = orthogonal_align(ca, cb, proper_only=not allow_reflection)
    resid = ca @ r.T - cb
    return float(np.einsum("ij,ij->", resid, resid))


def _spectrum(pos):
    centered = pos - pos.mean(axis=0)
    return np.sort(np.linalg.eigvalsh(centered.T @ centered))


def congruent(a: LabeledPointCloud, b: LabeledPointCloud, tol: float = DEFAULT_TOL,
              allow_reflection: bool = True) -> CongruenceVerdict:
    _require_finite(a, b)
    n = len(a)
    if n != len(b):
        return CongruenceVerdict(False, "point counts differ")
    if Counter(a.labels) != Counter(b.labels):
        return CongruenceVerdict(False, "species multisets differ")
    if n > EXACT_SEARCH_LIMIT:
        raise UnsupportedSizeError(f"{n} points exceed the exact-search limit of {EXACT_SEARCH_LIMIT}")
    if n == 0:
        return CongruenceVerdict(True, "empty", (), np.eye(3), np.zeros(3), 0.0)

    xa = a.positions - a.positions.mean(axis=0)
    xb = b.positions - b.positions.mean(axis=0)
    shift = math.sqrt(n) * tol
    norms = np.linalg.norm(xa) + np.linalg.norm(xb)

    # |lambda_k(X^T X) - lambda_k(Y^T Y)| <= |X - Y|_2 (|X| + |Y|)
    if np.max(np.abs(_spectrum(xa) - _spectrum(xb))) > shift * norms + 1e-12 * norms**2:
        return CongruenceVerdict(False, "centered Gram spectra differ")

    da, db = _distances(xa), _distances(xb)
    slack = 2 * shift + 1e-12 * max(1.0, float(da.max()))
    la, lb = a.labels, b.labels

    # candidate images per point: same species and matching sorted distance profile
    prof_a = [np.sort(da[i]) for i in range(n)]
    prof_b = [np.sort(db[j]) for j in range(n)]
    cand = []
    for i in range(n):
        ci = [j for j in range(n) if lb[j] == la[i] and np.max(np.abs(prof_a[i] - prof_b[j])) <= slack]
        if not ci:
            return CongruenceVerdict(False, f"no distance-profile match for point {i}")
        cand.append(ci)

    # index order + ascending candidates: the first accepted leaf is the
    # lexicographically smallest accepting permutation
    order = list(range(n))
    perm = [-1] * n
    budget = n * tol * tol
    used = [False] * n

    def leaf():
        p = np.array(perm)
        r = orthogonal_align(xa, xb[p], proper_only=not allow_reflection)
        resid = xa @ r.T - xb[p]
        rmsd = math.sqrt(float(np.einsum("ij,ij->", resid, resid)) / n)
        return r, rmsd

    def search(depth):
        if depth == n:
            r, rmsd = leaf()
            if rmsd <= tol:
                return r, rmsd
            return None
        i = order[depth]
        placed = order[:depth]
        for j in cand[i]:
            if used[j]:
                continue
            if any(abs(da[i, k] - db[j, perm[k]]) > slack for k in placed):
                continue
            perm[i] = j
            used[j] = True
            if depth >= 3 and _subset_residual(xa, xb, order[: depth + 1], perm, allow_reflection) > budget:
                used[j] = False
                perm[i] = -1
                continue
            found = search(depth + 1)
            if found is not None:
                return found
            used[j] = False
            perm[i] = -1
        return None

    found = search(0)
    if found is None:
        return CongruenceVerdict(False, "no permutation admits an orthogonal alignment within tol")
    r, rmsd = found
    translation = b.positions.mean(axis=0) - a.positions.mean(axis=0) @ r.T
    return CongruenceVerdict(True, "aligned", tuple(perm), r, translation, rmsd)


def _pair_entries(cloud):
    pos = cloud.positions
    d = _distances(pos)
    out = []
    n = len(pos)
    for i in range(n):
        for j in range(i + 1, n):
            out.append((tuple(sorted((cloud.labels[i], cloud.labels[j]))), float(d[i, j])))
    return sorted(out)


def global_distance_multiset_equal(a: LabeledPointCloud, b: LabeledPointCloud,
                                   tol: float = DEFAULT_TOL) -> bool:
    """Sorted all-pairs ``(species pair, distance)`` lists agree entrywise within ``tol``."""
    _require_finite(a, b)
    ea, eb = _pair_entries(a), _pair_entries(b)
    if len(ea) != len(eb):
        return False
    by_a, by_b = {}, {}
    for key, d in ea:
        by_a.setdefault(key, []).append(d)
    for key, d in eb:
        by_b.setdefault(key, []).append(d)
    if by_a.keys() != by_b.keys():
        return False
    return all(
        len(by_a[k]) == len(by_b[k]) and np.all(np.abs(np.array(by_a[k]) - np.array(by_b[k])) <= tol)
        for k in by_a
    )


def _node_profiles(cloud):
    d = _distances(cloud.positions)
    profiles = []
    for i, lab in enumerate(cloud.labels):
        per_species = {}
        for j, lj in enumerate(cloud.labels):
            if j != i:
                per_species.setdefault(lj, []).append(float(d[i, j]))
        profiles.append((lab, {k: np.sort(v) for k, v in per_species.items()}))
    return profiles


def _profiles_match(p, q, tol):
    if p[0] != q[0] or p[1].keys() != q[1].keys():
        return False
    return all(len(p[1][k]) == len(q[1][k]) and np.all(np.abs(p[1][k] - q[1][k]) <= tol) for k in p[1])


def per_node_distance_multisets_equal(a: LabeledPointCloud, b: LabeledPointCloud,
                                      tol: float = DEFAULT_TOL) -> bool:
    """Multiset of per-node, species-tagged sorted neighbor distances agree.

    Nodes are matched by a perfect bipartite matching on profile compatibility,
    so near-ties cannot cause a false negative.
    """
    _require_finite(a, b)
    if len(a) != len(b):
        return False
    pa, pb = _node_profiles(a), _node_profiles(b)
    n = len(pa)
    if n == 0:
        return True
    cost = np.ones((n, n))
    for i in range(n):
        for j in range(n):
            if _profiles_match(pa[i], pb[j], tol):
                cost[i, j] = 0.0
    rows, cols = linear_sum_assignment(cost)
    return bool(cost[rows, cols].sum() == 0)
