"""Distance-decorated and angular Weisfeiler-Lehman refinement.

Node colors are 128-bit XXH3 digests (``xxhash.xxh3_128``, seed 0) of a
canonical little-endian byte serialization:

* iteration 0: ``b"label:" + utf8(label)``
* distance step: own color (16 B), then for every sorted
  ``(neighbor color, distance code, multiplicity)`` entry 16 B + 8 B signed + 4 B
* angular step: own color, then sorted
  ``(color_a, color_b, code_a, code_b, code_dot, multiplicity)`` entries

Distance codes are ``round(r^2 / bin_width)`` in ``hash_bins`` mode.  In
``tolerant_multiset`` mode raw squared distances are clustered (single
linkage with gap ``tol``) into a codebook; comparisons rebuild one shared
codebook from both structures, so that path is slow but immune to bin edges.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import xxhash

from .errors import (
    IncomparableFingerprintsError,
    InvalidParameterError,
    UnsupportedPolicyError,
)
from .geometry import LabeledPointCloud, neighbor_arrays, sqnorm, DEFAULT_PAIR_CAP

HASH_NAME = "xxh3_128"
FINGERPRINT_VERSION = 1


@dataclass(frozen=True)
class NeighborhoodPolicy:
    kind: str
    radius: Optional[float] = None
    k: Optional[int] = None

    def __post_init__(self):
        if self.kind == "cutoff":
            if self.radius is None or not self.radius > 0:
                raise InvalidParameterError("cutoff radius must be > 0")
        elif self.kind == "k_nearest":
            if self.k is None or int(self.k) != self.k or self.k < 1:
                raise InvalidParameterError("k must be an integer >= 1")
        elif self.kind != "fully_connected":
            raise InvalidParameterError(f"unknown neighborhood kind {self.kind!r}")

    @classmethod
    def cutoff(cls, radius: float) -> "NeighborhoodPolicy":
        return cls("cutoff", radius=float(radius))

    @classmethod
    def k_nearest(cls, k: int) -> "NeighborhoodPolicy":
        return cls("k_nearest", k=int(k))

    @classmethod
    def fully_connected(cls) -> "NeighborhoodPolicy":
        return cls("fully_connected")

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.radius is not None:
            d["radius"] = self.radius
        if self.k is not None:
            d["k"] = self.k
        return d


@dataclass(frozen=True)
class Quantizer:
    bin_width: float = 1e-9
    mode: str = "hash_bins"
    tol: float = 1e-8

    def __post_init__(self):
        if not self.bin_width > 0:
            raise InvalidParameterError("bin_width must be > 0")
        if not self.tol >= 0:
            raise InvalidParameterError("tol must be >= 0")
        if self.mode not in ("hash_bins", "tolerant_multiset"):
            raise InvalidParameterError(f"unknown quantizer mode {self.mode!r}")

    @property
    def tolerant(self) -> bool:
        return self.mode == "tolerant_multiset"

    def to_dict(self) -> dict:
        d = {"mode": self.mode, "bin_width": self.bin_width}
        if self.tolerant:
            d["tol"] = self.tol
        return d


def _stamp(kind: str, policy: NeighborhoodPolicy, quantizer: Quantizer) -> tuple:
    items = {"kind": kind, "hash": HASH_NAME, "version": FINGERPRINT_VERSION}
    items.update({f"policy.{k}": v for k, v in policy.to_dict().items()})
    items.update({f"quantizer.{k}": v for k, v in quantizer.to_dict().items()})
    return tuple(sorted(items.items()))


class Codebook:
    """Maps raw Å² values to integer codes."""

    def __init__(self, quantizer: Quantizer, values: Sequence[np.ndarray] = ()):
        self.quantizer = quantizer
        self._uniq = None
        self._ids = None
        if quantizer.tolerant:
            flat = [np.ravel(v) for v in values if len(v)]
            uniq = np.unique(np.concatenate(flat)) if flat else np.zeros(0)
            gaps = np.diff(uniq) > quantizer.tol
            self._uniq = uniq
            self._ids = np.concatenate([[0], np.cumsum(gaps)]).astype(np.int64)

    def encode(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if not self.quantizer.tolerant:
            return np.rint(values / self.quantizer.bin_width).astype(np.int64)
        pos = np.searchsorted(self._uniq, values)
        if values.size and (
            np.any(pos >= len(self._uniq)) or np.any(self._uniq[np.minimum(pos, len(self._uniq) - 1)] != values)
        ):
            raise InvalidParameterError("value missing from tolerant codebook")
        return self._ids[pos]


@dataclass(frozen=True)
class DistanceGraph:
    """Nodes with labels and per-node neighbor arrays under one policy.

    ``neighbors[i]`` and ``sqdists[i]`` hold every edge of node ``i``
    (replicas of the same atom are separate edges).  ``edges`` is the
    quantized multiset view ``(neighbor label, distance code, multiplicity)``.
    """

    labels: tuple[str, ...]
    neighbors: tuple[np.ndarray, ...]
    sqdists: tuple[np.ndarray, ...]
    policy: NeighborhoodPolicy
    quantizer: Quantizer
    edges: tuple[tuple[tuple[str, int, int], ...], ...] = field(repr=False, default=())

    def __len__(self):
        return len(self.labels)

    def raw_values(self) -> list[np.ndarray]:
        return list(self.sqdists)


def _neighborhoods(cloud: LabeledPointCloud, policy: NeighborhoodPolicy, quantizer: Quantizer,
                   pair_cap: int = DEFAULT_PAIR_CAP):
    """Per-node ``(j, delta, sqdist)`` arrays selected by ``policy``."""
    n = len(cloud)
    if policy.kind == "fully_connected":
        if cloud.is_periodic:
            raise UnsupportedPolicyError(
                "fully_connected is undefined for periodic clouds; use cutoff(radius) instead"
            )
        pos = cloud.positions
        out = []
        for i in range(n):
            jj = np.array([j for j in range(n) if j != i], dtype=np.int64)
            delta = pos[jj] - pos[i] if len(jj) else np.zeros((0, 3))
            out.append((jj, delta, sqnorm(delta)))
        return out
    if policy.kind == "cutoff":
        return _split(neighbor_arrays(cloud, policy.radius, pair_cap), n)
    return _k_nearest(cloud, policy.k, quantizer, pair_cap)


def _split(arr, n):
    bounds = np.searchsorted(arr.i, np.arange(n + 1))
    return [
        (arr.j[a:b], arr.delta[a:b], arr.sqdist[a:b]) for a, b in zip(bounds[:-1], bounds[1:])
    ]


def _k_nearest(cloud, k, quantizer, pair_cap):
    n = len(cloud)
    if not cloud.is_periodic:
        pos = cloud.positions
        span = float(np.ptp(pos, axis=0).max()) if n else 0.0
        radius = max(span * 2, 1.0)
    else:
        radius = max(p for p in cloud.cell if p is not None)
    while True:
        hoods = _split(neighbor_arrays(cloud, radius, pair_cap), n)
        enough = all(len(h[0]) >= min(k, _max_neighbors(cloud)) for h in hoods)
        if enough:
            break
        radius *= 2
    out = []
    for jj, delta, d2 in hoods:
        if len(jj) == 0:
            out.append((jj, delta, d2))
            continue
        if quantizer.tolerant:
            key = d2
            kth = np.sort(key)[min(k, len(key)) - 1]
            keep = key <= kth + quantizer.tol
        else:
            key = Codebook(quantizer).encode(d2)
            kth = np.sort(key)[min(k, len(key)) - 1]
            keep = key <= kth
        out.append((jj[keep], delta[keep], d2[keep]))
    return out


def _max_neighbors(cloud):
    # finite clouds cannot supply more than n - 1 neighbors
    return math.inf if cloud.is_periodic else len(cloud) - 1


def build_graph(cloud: LabeledPointCloud, policy: NeighborhoodPolicy,
                quantizer: Quantizer | None = None, pair_cap: int = DEFAULT_PAIR_CAP) -> DistanceGraph:
    quantizer = quantizer or Quantizer()
    hoods = _neighborhoods(cloud, policy, quantizer, pair_cap)
    neighbors = tuple(h[0] for h in hoods)
    sqdists = tuple(h[2] for h in hoods)
    book = Codebook(quantizer, sqdists)
    edges = []
    for jj, d2 in zip(neighbors, sqdists):
        codes = book.encode(d2)
        counts = Counter(zip((cloud.labels[j] for j in jj), codes.tolist()))
        edges.append(tuple(sorted((lab, c, m) for (lab, c), m in counts.items())))
    return DistanceGraph(cloud.labels, neighbors, sqdists, policy, quantizer, tuple(edges))


def _label_hash(label: str) -> int:
    return xxhash.xxh3_128_intdigest(b"label:" + label.encode("utf-8"))


def _digest(own: int, entries) -> int:
    h = xxhash.xxh3_128()
    h.update(own.to_bytes(16, "little"))
    for entry in entries:
        *colors, codes, mult = entry
        for c in colors:
            h.update(c.to_bytes(16, "little"))
        for c in codes:
            h.update(int(c).to_bytes(8, "little", signed=True))
        h.update(mult.to_bytes(4, "little"))
    return h.intdigest()


@dataclass(frozen=True)
class WlFingerprint:
    """Per-iteration sorted node-hash multisets and the final partition."""

    iterations: tuple[tuple[int, ...], ...]
    node_hashes: tuple[tuple[int, ...], ...]
    converged: bool
    partition: tuple[tuple[int, ...], ...]
    stamp: tuple
    source: object = field(default=None, repr=False, compare=False)

    @property
    def n_classes(self) -> int:
        return len(self.partition)

    def class_counts(self) -> list[int]:
        return [len(set(h)) for h in self.node_hashes]


@dataclass(frozen=True)
class AngularFingerprint(WlFingerprint):
    """WL fingerprint whose neighborhoods are decorated by neighbor pairs.

    ``triplets[i]`` is the sorted multiset of quantized
    ``(r_ij^2, r_ij'^2, r_ij . r_ij')`` with the two squared distances ordered.
    """

    triplets: tuple[tuple[tuple[int, int, int], ...], ...] = field(default=(), repr=False, compare=False)


def _partition(hashes: Sequence[int]) -> tuple[tuple[int, ...], ...]:
    groups: dict[int, list[int]] = {}
    for idx, h in enumerate(hashes):
        groups.setdefault(h, []).append(idx)
    return tuple(sorted(tuple(g) for g in groups.values()))


def _run(labels, step, max_iters):
    hashes = [_label_hash(lab) for lab in labels]
    history = [tuple(hashes)]
    converged = False
    for _ in range(max_iters):
        new = [step(i, hashes) for i in range(len(hashes))]
        history.append(tuple(new))
        stable = len(set(new)) == len(set(hashes))
        hashes = new
        if stable:
            converged = True
            break
    return history, converged


def _distance_refine(graph: DistanceGraph, book: Codebook, max_iters: int, stamp) -> WlFingerprint:
    codes = [book.encode(d2).tolist() for d2 in graph.sqdists]
    nbrs = [jj.tolist() for jj in graph.neighbors]

    def step(i, hashes):
        counts = Counter(zip((hashes[j] for j in nbrs[i]), codes[i]))
        entries = sorted((hj, (c,), m) for (hj, c), m in counts.items())
        return _digest(hashes[i], entries)

    history, converged = _run(graph.labels, step, max_iters)
    return WlFingerprint(
        iterations=tuple(tuple(sorted(h)) for h in history),
        node_hashes=tuple(history),
        converged=converged,
        partition=_partition(history[-1]),
        stamp=stamp,
        source=graph,
    )


def _default_iters(n, max_iters):
    if max_iters is None:
        return max(1, n)
    if max_iters < 1:
        raise InvalidParameterError("max_iters must be >= 1")
    return int(max_iters)


def wl_refine(graph: DistanceGraph, max_iters: int | None = None) -> WlFingerprint:
    """Iterate ``h_i <- hash(h_i, {{(h_j, r_ij^2)}})`` until the partition is stable."""
    stamp = _stamp("distance", graph.policy, graph.quantizer)
    book = Codebook(graph.quantizer, graph.raw_values())
    return _distance_refine(graph, book, _default_iters(len(graph), max_iters), stamp)


@dataclass(frozen=True)
class AngularData:
    labels: tuple[str, ...]
    pair_a: tuple[np.ndarray, ...]
    pair_b: tuple[np.ndarray, ...]
    d2_a: tuple[np.ndarray, ...]
    d2_b: tuple[np.ndarray, ...]
    dots: tuple[np.ndarray, ...]
    policy: NeighborhoodPolicy
    quantizer: Quantizer

    def __len__(self):
        return len(self.labels)

    def raw_values(self) -> list[np.ndarray]:
        return list(self.d2_a) + list(self.dots)


def angular_data(cloud: LabeledPointCloud, policy: NeighborhoodPolicy,
                 quantizer: Quantizer | None = None, pair_cap: int = DEFAULT_PAIR_CAP) -> AngularData:
    quantizer = quantizer or Quantizer()
    hoods = _neighborhoods(cloud, policy, quantizer, pair_cap)
    pa, pb, da, db, dots = [], [], [], [], []
    for jj, delta, d2 in hoods:
        ea, eb = np.triu_indices(len(jj))
        x, y = delta[ea], delta[eb]
        dot = x[:, 0] * y[:, 0] + x[:, 1] * y[:, 1] + x[:, 2] * y[:, 2]
        pa.append(jj[ea])
        pb.append(jj[eb])
        da.append(d2[ea])
        db.append(d2[eb])
        dots.append(dot)
    return AngularData(cloud.labels, tuple(pa), tuple(pb), tuple(da), tuple(db), tuple(dots), policy, quantizer)


def _angular_refine(data: AngularData, book: Codebook, max_iters: int, stamp) -> AngularFingerprint:
    per_node = []
    triplets = []
    for a, b, da, db, dot in zip(data.pair_a, data.pair_b, data.d2_a, data.d2_b, data.dots):
        ca, cb, cd = book.encode(da).tolist(), book.encode(db).tolist(), book.encode(dot).tolist()
        per_node.append((a.tolist(), b.tolist(), ca, cb, cd))
        triplets.append(tuple(sorted((min(x, y), max(x, y), z) for x, y, z in zip(ca, cb, cd))))

    def step(i, hashes):
        a, b, ca, cb, cd = per_node[i]
        counts = Counter()
        for ja, jb, xa, xb, xd in zip(a, b, ca, cb, cd):
            ha, hb = hashes[ja], hashes[jb]
            if (xb, hb) < (xa, ha):
                ha, hb, xa, xb = hb, ha, xb, xa
            counts[(ha, hb, xa, xb, xd)] += 1
        entries = sorted((k[0], k[1], k[2:], m) for k, m in counts.items())
        return _digest(hashes[i], entries)

    history, converged = _run(data.labels, step, max_iters)
    return AngularFingerprint(
        iterations=tuple(tuple(sorted(h)) for h in history),
        node_hashes=tuple(history),
        converged=converged,
        partition=_partition(history[-1]),
        stamp=stamp,
        source=data,
        triplets=tuple(triplets),
    )


def angular_refine(cloud: LabeledPointCloud, policy: NeighborhoodPolicy,
                   quantizer: Quantizer | None = None, max_iters: int | None = None,
                   pair_cap: int = DEFAULT_PAIR_CAP) -> AngularFingerprint:
    """WL refinement over neighbor pairs decorated with two distances and a dot product."""
    data = angular_data(cloud, policy, quantizer, pair_cap)
    stamp = _stamp("angular", data.policy, data.quantizer)
    book = Codebook(data.quantizer, data.raw_values())
    return _angular_refine(data, book, _default_iters(len(data), max_iters), stamp)


@dataclass(frozen=True)
class FingerprintComparison:
    equal: bool
    first_divergent_iteration: Optional[int]
    iterations_compared: int

    def __bool__(self):
        return self.equal


def _compare_histories(a: WlFingerprint, b: WlFingerprint) -> FingerprintComparison:
    common = min(len(a.iterations), len(b.iterations))
    for t in range(common):
        if a.iterations[t] != b.iterations[t]:
            return FingerprintComparison(False, t, t + 1)
    if len(a.iterations) != len(b.iterations):
        return FingerprintComparison(False, common, common)
    return FingerprintComparison(True, None, common)


def fingerprints_equal(a: WlFingerprint, b: WlFingerprint) -> FingerprintComparison:
    """Compare hash multisets at every iteration; report the first mismatch."""
    if a.stamp != b.stamp:
        raise IncomparableFingerprintsError(
            f"fingerprints built with different configurations: {dict(a.stamp)} vs {dict(b.stamp)}"
        )
    quant = dict(a.stamp).get("quantizer.mode")
    if quant != "tolerant_multiset":
        return _compare_histories(a, b)
    # shared codebook over both structures, then an ordinary comparison
    src_a, src_b = a.source, b.source
    book = Codebook(src_a.quantizer, src_a.raw_values() + src_b.raw_values())
    iters = max(len(a.iterations), len(b.iterations)) - 1
    iters = max(iters, 1, len(src_a), len(src_b))
    if isinstance(src_a, AngularData):
        ra = _angular_refine(src_a, book, iters, a.stamp)
        rb = _angular_refine(src_b, book, iters, b.stamp)
    else:
        ra = _distance_refine(src_a, book, iters, a.stamp)
        rb = _distance_refine(src_b, book, iters, b.stamp)
    return _compare_histories(ra, rb)


def wl_compare(a: LabeledPointCloud, b: LabeledPointCloud, policy: NeighborhoodPolicy,
               quantizer: Quantizer | None = None, max_iters: int | None = None,
               angular: bool = False) -> tuple[FingerprintComparison, WlFingerprint, WlFingerprint]:
    """Fingerprint two clouds with one configuration and compare them."""
    quantizer = quantizer or Quantizer()
    if max_iters is None:
        max_iters = max(len(a), len(b), 1)
    if angular:
        fa = angular_refine(a, policy, quantizer, max_iters)
        fb = angular_refine(b, policy, quantizer, max_iters)
    else:
        fa = wl_refine(build_graph(a, policy, quantizer), max_iters)
        fb = wl_refine(build_graph(b, policy, quantizer), max_iters)
    return fingerprints_equal(fa, fb), fa, fb
