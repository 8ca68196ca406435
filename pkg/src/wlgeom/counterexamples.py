"""WL-degenerate structure pairs built from C/W distance swaps.

A pair ``(A+, A-)`` is periodic along x with period ``p``::

    C(s) = (p/4, c_y, s c_z)    W = (p/2, w_y, w_z)    V = (v_x, v_y, 0)
    X'   = (p/2 + X_x, X_y, -X_z)    for every unprimed point X

``V``/``W`` are shared by both structures; only the ``C`` points are
reflected through the xy plane.  Extra W-type and V-type pairs can be added
with their own labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .distinctness import congruent
from .errors import (
    DegenerateParametersError,
    InvalidInputError,
    InvalidParameterError,
    SamplingFailureError,
    WlGeomError,
)
from .geometry import LabeledPointCloud, fold_to_finite, minimum_image, sqnorm
from .graph_wl import NeighborhoodPolicy, Quantizer, wl_compare

MIN_ASYMMETRY = 1e-3
CERTIFY_CUTOFFS = (1.5, 3.0, 10.0)
# sampled parameters snap to this dyadic grid so that every displacement and
# squared distance of the periodic construction is an exact double
GRID = 2.0**-16
WATER_ENERGIES = ((-0.92, 2.43), (0.39, 2.07), (-0.65, -0.04))


class CertificationError(WlGeomError):
    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


@dataclass(frozen=True)
class ExtraPair:
    """Additional W-type ``(p/2, a, b)`` or V-type ``(a, b, 0)`` point and its primed partner."""

    kind: str
    a: float
    b: float
    label: str

    def __post_init__(self):
        if self.kind not in ("W", "V"):
            raise InvalidParameterError(f"extra pair kind must be 'W' or 'V', got {self.kind!r}")


@dataclass(frozen=True)
class DegenerateParams:
    p: float
    c_y: float
    c_z: float
    w_y: float
    w_z: float
    v_x: float
    v_y: float
    labels: tuple[str, str, str] = ("C", "W", "V")
    extras: tuple[ExtraPair, ...] = ()
    min_asymmetry: float = MIN_ASYMMETRY

    FREE = ("p", "c_y", "c_z", "w_y", "w_z", "v_x", "v_y")

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "extras", tuple(self.extras))
        values = [getattr(self, k) for k in self.FREE]
        values += [v for e in self.extras for v in (e.a, e.b)]
        if not all(math.isfinite(v) for v in values):
            raise InvalidParameterError("all construction parameters must be finite")
        if not self.p > 0:
            raise InvalidParameterError(f"period p must be > 0, got {self.p}")
        if len(self.labels) != 3:
            raise InvalidParameterError("labels must name the (C, W, V) classes")
        if abs(self.c_z) < self.min_asymmetry:
            raise DegenerateParametersError(
                f"|c_z| = {abs(self.c_z):g} is below min_asymmetry {self.min_asymmetry:g}; A+ and A- would coincide"
            )

    @property
    def dimension(self) -> int:
        return manifold_dimension(len(self.extras))

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.FREE}
        d["labels"] = list(self.labels)
        d["extras"] = [[e.kind, e.a, e.b, e.label] for e in self.extras]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DegenerateParams":
        extras = tuple(ExtraPair(k, float(a), float(b), str(lab)) for k, a, b, lab in d.get("extras", ()))
        kw = {k: float(d[k]) for k in cls.FREE}
        return cls(**kw, labels=tuple(d.get("labels", ("C", "W", "V"))), extras=extras)


def manifold_dimension(n_extras: int = 0) -> int:
    """Free parameters of the family: seven, plus two per extra pair."""
    return 7 + 2 * n_extras


@dataclass(frozen=True)
class DegeneratePair:
    plus: LabeledPointCloud
    minus: LabeledPointCloud
    params: Optional[DegenerateParams]
    provenance: str = ""


@dataclass(frozen=True)
class EnergyPair:
    e_plus: float
    e_minus: float

    def __post_init__(self):
        if not (math.isfinite(self.e_plus) and math.isfinite(self.e_minus)):
            raise InvalidInputError("energies must be finite")


def _unprimed(params: DegenerateParams, sign: int):
    p = params.p
    lc, lw, lv = params.labels
    pts = [
        (lc, (p / 4, params.c_y, sign * params.c_z)),
        (lw, (p / 2, params.w_y, params.w_z)),
        (lv, (params.v_x, params.v_y, 0.0)),
    ]
    for e in params.extras:
        if e.kind == "W":
            pts.append((e.label, (p / 2, e.a, e.b)))
        else:
            pts.append((e.label, (e.a, e.b, 0.0)))
    return pts


def _structure(params: DegenerateParams, sign: int) -> LabeledPointCloud:
    base = _unprimed(params, sign)
    primed = [(lab, (params.p / 2 + x, y, -z)) for lab, (x, y, z) in base]
    pts = base + primed
    tag = "A+" if sign > 0 else "A-"
    return LabeledPointCloud(
        [lab for lab, _ in pts],
        [xyz for _, xyz in pts],
        (params.p, None, None),
        f"{tag} degenerate construction",
    )


def point_index(params: DegenerateParams, name: str) -> int:
    """Index of ``C``, ``W``, ``V`` or a primed name (``"W'"``) in a generated structure."""
    base = {"C": 0, "W": 1, "V": 2}
    n_unprimed = 3 + len(params.extras)
    if name.endswith("'"):
        return n_unprimed + base[name[:-1]]
    return base[name]


def make_degenerate_pair(params: DegenerateParams, unchecked: bool = False,
                         quantizer: Quantizer | None = None) -> DegeneratePair:
    pair = DegeneratePair(
        _structure(params, +1),
        _structure(params, -1),
        params,
        "C/W swap construction, periodic along x",
    )
    if not unchecked:
        cert = certify_pair(pair, quantizer=quantizer)
        if not cert.passed:
            raise CertificationError(f"certification failed: {cert.failures}", cert)
    return pair


def swap_sqdists(pair: DegeneratePair) -> list[tuple[float, float, float, float]]:
    """For every W-type point: ``(|C+W|^2, |C-W'|^2, |C+W'|^2, |C-W|^2)`` by minimum image."""
    params = pair.params
    cell = pair.plus.cell
    n_unprimed = 3 + len(params.extras)
    w_idx = [1] + [3 + k for k, e in enumerate(params.extras) if e.kind == "W"]
    out = []
    for w in w_idx:
        wp = w + n_unprimed

        def d2(cloud, i, j):
            return float(sqnorm(minimum_image(cloud.positions[j] - cloud.positions[i], cell).delta))

        out.append((d2(pair.plus, 0, w), d2(pair.minus, 0, wp), d2(pair.plus, 0, wp), d2(pair.minus, 0, w)))
    return out


def periodize(pair: DegeneratePair, p_y: float | None = None, p_z: float | None = None) -> DegeneratePair:
    """Add periodicity along y and/or z to both structures."""
    for p in (p_y, p_z):
        if p is not None and not p > 0:
            raise InvalidParameterError("added periods must be > 0")
    cell = (pair.plus.cell[0], p_y if p_y is not None else pair.plus.cell[1],
            p_z if p_z is not None else pair.plus.cell[2])
    return DegeneratePair(
        pair.plus.with_cell(cell),
        pair.minus.with_cell(cell),
        pair.params,
        f"{pair.provenance}; periodized p_y={p_y} p_z={p_z}",
    )


def fold_pair(pair: DegeneratePair, copies: int) -> tuple[LabeledPointCloud, LabeledPointCloud]:
    return fold_to_finite(pair.plus, copies), fold_to_finite(pair.minus, copies)


def replica_mapping_audit(pair: DegeneratePair) -> bool:
    """Equal squared distances in A+ and A- come from displacements equal up to per-axis sign.

    Uses minimum image along x only; y and z components are taken raw.  For
    every squared-distance value, the multiset of ``(|dx|, |dy|, |dz|)``
    must agree between the two structures.
    """
    def table(cloud):
        px = cloud.cell[0]
        pos = cloud.positions
        groups: dict[float, list] = {}
        for i in range(len(pos)):
            for j in range(i + 1, len(pos)):
                delta = minimum_image(pos[j] - pos[i], (px, None, None)).delta
                key = float(sqnorm(delta))
                groups.setdefault(key, []).append(tuple(abs(float(c)) for c in delta))
        return {k: sorted(v) for k, v in groups.items()}

    return table(pair.plus) == table(pair.minus)


@dataclass
class PairCertificate:
    wl_equal: dict = field(default_factory=dict)
    wl_classes: dict = field(default_factory=dict)
    angular_distinct: Optional[bool] = None
    angular_first_divergence: Optional[int] = None
    congruent: Optional[bool] = None
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "wl_equal": {str(k): v for k, v in self.wl_equal.items()},
            "wl_classes": {str(k): v for k, v in self.wl_classes.items()},
            "angular_distinct": self.angular_distinct,
            "angular_first_divergence": self.angular_first_divergence,
            "congruent": self.congruent,
            "failures": list(self.failures),
        }


def certify_pair(pair: DegeneratePair, cutoffs: Sequence[float] = CERTIFY_CUTOFFS,
                 quantizer: Quantizer | None = None, angular_cutoff: float = 1.5) -> PairCertificate:
    """WL-equal at every cutoff (multiples of p), angularly distinct at iteration 1.

    Finite pairs are checked under the fully connected policy and must also
    fail the congruence test.
    """
    quantizer = quantizer or Quantizer()
    cert = PairCertificate()
    a, b = pair.plus, pair.minus
    if a.is_periodic:
        p = a.cell[0] if a.cell[0] is not None else max(x for x in a.cell if x is not None)
        policies = {c: NeighborhoodPolicy.cutoff(c * p) for c in cutoffs}
        ang_policy = NeighborhoodPolicy.cutoff(angular_cutoff * p)
    else:
        policies = {"full": NeighborhoodPolicy.fully_connected()}
        ang_policy = NeighborhoodPolicy.fully_connected()
    for key, policy in policies.items():
        cmp, fa, fb = wl_compare(a, b, policy, quantizer)
        cert.wl_equal[key] = cmp.equal
        cert.wl_classes[key] = (fa.n_classes, fb.n_classes)
        if not cmp.equal:
            cert.failures.append(f"WL distinguishes the pair at {key} (iteration {cmp.first_divergent_iteration})")
    cmp, _, _ = wl_compare(a, b, ang_policy, quantizer, max_iters=1, angular=True)
    cert.angular_distinct = not cmp.equal
    cert.angular_first_divergence = cmp.first_divergent_iteration
    if cmp.equal or cmp.first_divergent_iteration != 1:
        cert.failures.append("angular refinement does not separate the pair at iteration 1")
    if not a.is_periodic:
        cert.congruent = congruent(a, b).congruent
        if cert.congruent:
            cert.failures.append("structures are congruent")
    return cert


DEFAULT_RANGES = {
    "p": (3.0, 6.0),
    "c_y": (-1.0, 1.0),
    "c_z": (0.25, 1.5),
    "w_y": (-2.0, 2.0),
    "w_z": (-1.5, 1.5),
    "v_x": (-1.5, 1.5),
    "v_y": (-2.0, 2.0),
}

# y offsets kept above -p/pi so that folds with P >= 2 have positive radii
FOLD_RANGES = dict(DEFAULT_RANGES, c_y=(-0.5, 1.5), w_y=(-0.5, 1.5), v_y=(-0.5, 1.5))


def _snap(x: float) -> float:
    return round(x / GRID) * GRID


def min_separation(params: DegenerateParams) -> float:
    pair = make_degenerate_pair(params, unchecked=True)
    out = math.inf
    for cloud in (pair.plus, pair.minus):
        pos = cloud.positions
        cell = cloud.cell
        for i in range(len(pos)):
            for j in range(i + 1, len(pos)):
                out = min(out, float(sqnorm(minimum_image(pos[j] - pos[i], cell).delta)))
    return math.sqrt(out) if out < math.inf else math.inf


def _check_ranges(ranges):
    out = dict(DEFAULT_RANGES)
    out.update(ranges or {})
    for key, bounds in out.items():
        if key not in DegenerateParams.FREE:
            raise InvalidInputError(f"unknown parameter range {key!r}")
        lo, hi = bounds
        if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
            raise InvalidInputError(f"range for {key} must be finite with lo <= hi")
    return out


def _draw_one(k, seed_seq, ranges, n_extras, extra_ranges, labels, min_sep, max_retries, certify, quantizer):
    rng = np.random.default_rng(seed_seq)
    reasons: dict[str, int] = {}

    def reject(why):
        reasons[why] = reasons.get(why, 0) + 1

    for _ in range(max_retries):
        vals = {key: _snap(rng.uniform(*ranges[key])) for key in DegenerateParams.FREE}
        # p/4 must stay on the grid
        vals["p"] = round(vals["p"] / (4 * GRID)) * 4 * GRID
        extras = []
        for _e in range(n_extras):
            kind = "W" if rng.random() < 0.5 else "V"
            a = _snap(rng.uniform(*extra_ranges[0]))
            b = _snap(rng.uniform(*extra_ranges[1]))
            extras.append(ExtraPair(kind, a, b, labels[1] if kind == "W" else labels[2]))
        try:
            params = DegenerateParams(**vals, labels=labels, extras=tuple(extras))
        except WlGeomError as exc:
            reject(type(exc).__name__)
            continue
        if min_separation(params) < min_sep:
            reject("min_separation")
            continue
        if certify:
            cert = certify_pair(make_degenerate_pair(params, unchecked=True), quantizer=quantizer)
            if not cert.passed:
                reject("certification")
                continue
        return params
    raise SamplingFailureError(
        f"sample {k}: no valid parameters after {max_retries} draws",
        {"sample": k, "rejections": reasons, "ranges": {key: list(v) for key, v in ranges.items()}},
    )


def sample_manifold(count: int, seed: int, ranges: dict | None = None, n_extras: int = 0,
                    extra_ranges=((-2.0, 2.0), (-1.5, 1.5)),
                    labels: tuple[str, str, str] = ("C", "W", "V"), min_sep: float = 0.5,
                    max_retries: int = 200, certify: bool = True,
                    quantizer: Quantizer | None = None, workers: int = 1) -> list[DegenerateParams]:
    """Draw ``count`` certified parameter sets.

    Sample ``k`` draws from its own ``SeedSequence(seed).spawn`` stream, so the
    result does not depend on ``workers``.  Values are snapped to ``GRID``.
    """
    if count < 1:
        raise InvalidInputError("count must be >= 1")
    ranges = _check_ranges(ranges)
    streams = np.random.SeedSequence(seed).spawn(count)
    args = [(k, ss, ranges, n_extras, extra_ranges, tuple(labels), min_sep, max_retries, certify, quantizer)
            for k, ss in enumerate(streams)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_draw_one, *zip(*args)))
    return [_draw_one(*a) for a in args]


def error_floor(pairs: Sequence) -> float:
    """Best RMSE (eV) for a model forced to predict one value per degenerate pair.

    The optimum is the pair mean, leaving a residual of half the gap on both
    structures: ``sqrt(mean(((e_plus - e_minus) / 2) ** 2))``.
    """
    pairs = [p if isinstance(p, EnergyPair) else EnergyPair(*p) for p in pairs]
    if not pairs:
        raise InvalidInputError("error_floor needs at least one energy pair")
    half_gaps = [(p.e_plus - p.e_minus) / 2 for p in pairs]
    return math.sqrt(sum(g * g for g in half_gaps) / len(half_gaps))


# --- builtin catalog -------------------------------------------------------

EXAMPLE_PARAMS = DegenerateParams(p=4.0, c_y=0.0, c_z=1.0, w_y=1.0, w_z=2.0, v_x=0.5, v_y=3.0)

# O on the C slots, H on W and V: two repeat units give (H2O)4-shaped clusters
WATER_PARAMS = DegenerateParams(
    p=15.734375, c_y=-3.609375, c_z=0.984375, w_y=-4.03125, w_z=1.03125, v_x=-3.9375, v_y=-3.578125,
    labels=("O", "H", "H"),
)


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    plus: LabeledPointCloud
    minus: LabeledPointCloud
    description: str
    params: Optional[DegenerateParams] = None


def ring12_pair(d: float = 1.0, separation: float = 4.0) -> tuple[LabeledPointCloud, LabeledPointCloud]:
    """Regular 12-gon vs two stacked regular hexagons, all edges ``d``."""
    r12 = d / (2 * math.sin(math.pi / 12))
    ang12 = 2 * math.pi * np.arange(12) / 12
    ring = np.column_stack([r12 * np.cos(ang12), r12 * np.sin(ang12), np.zeros(12)])
    ang6 = 2 * math.pi * np.arange(6) / 6
    hexa = np.column_stack([d * np.cos(ang6), d * np.sin(ang6), np.zeros(6)])
    hexb = hexa + np.array([0.0, 0.0, separation * d])
    labels = ["C"] * 12
    return (
        LabeledPointCloud(labels, ring, None, "ring12: regular 12-gon"),
        LabeledPointCloud(labels, np.vstack([hexa, hexb]), None, "ring12: two hexagons"),
    )


def _from_distances(d: np.ndarray) -> np.ndarray:
    """Coordinates realising a Euclidean distance matrix (classical MDS)."""
    n = len(d)
    j = np.eye(n) - 1.0 / n
    b = -0.5 * j @ (d**2) @ j
    w, v = np.linalg.eigh(b)
    w, v = w[::-1][:3], v[:, ::-1][:, :3]
    if np.any(w < -1e-9):
        raise InvalidParameterError("distance matrix is not realisable in 3D")
    return v * np.sqrt(np.clip(w, 0, None))


def tetrahedra_pair(a: float = 1.0, b: float = 1.1, c: float = 1.2):
    """Two tetrahedra with edge multiset {a, a, b, b, c, c} but different vertex environments.

    The first has opposite edges equal (every vertex sees {a, b, c}); the
    second puts both ``b`` edges on vertex 0 and both ``c`` edges on vertex 1.
    """
    def matrix(edges):
        m = np.zeros((4, 4))
        for (i, j), v in edges.items():
            m[i, j] = m[j, i] = v
        return m

    first = matrix({(0, 1): a, (2, 3): a, (0, 2): b, (1, 3): b, (0, 3): c, (1, 2): c})
    second = matrix({(0, 1): a, (2, 3): a, (0, 2): b, (0, 3): b, (1, 2): c, (1, 3): c})
    labels = ["C"] * 4
    return (
        LabeledPointCloud(labels, _from_distances(first), None, "tetrahedron, opposite edges equal"),
        LabeledPointCloud(labels, _from_distances(second), None, "tetrahedron, edges grouped by vertex"),
    )


def builtin_catalog() -> dict[str, CatalogEntry]:
    from .approximator import appendixb_pair

    rp, rm = appendixb_pair()
    ring, hexes = ring12_pair()
    tet_a, tet_b = tetrahedra_pair()
    example = make_degenerate_pair(EXAMPLE_PARAMS, unchecked=True)
    water = make_degenerate_pair(WATER_PARAMS, unchecked=True)
    wp, wm = fold_pair(water, 2)
    wp = replace(wp, metadata="tetramer_like A+ (O on C slots, H on W/V)")
    wm = replace(wm, metadata="tetramer_like A- (O on C slots, H on W/V)")
    entries = [
        CatalogEntry("appendixB", rp, rm, "5-point integer pair, same Gram entries in different order"),
        CatalogEntry("ring12", ring, hexes, "12-gon vs two hexagons; WL-equal only at first-neighbor cutoff"),
        CatalogEntry("tetramer_like", wp, wm, "water-labeled pair folded with two repeat units", WATER_PARAMS),
        CatalogEntry("example6", example.plus, example.minus, "six-point periodic pair, p=4", EXAMPLE_PARAMS),
        CatalogEntry("tetrahedra", tet_a, tet_b, "same pair-distance list, different vertex environments"),
    ]
    return {e.name: e for e in entries}
