import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wlgeom.counterexamples import (
    EXAMPLE_PARAMS,
    GRID,
    WATER_ENERGIES,
    WATER_PARAMS,
    CertificationError,
    DegeneratePair,
    DegenerateParams,
    EnergyPair,
    ExtraPair,
    builtin_catalog,
    certify_pair,
    error_floor,
    fold_pair,
    make_degenerate_pair,
    manifold_dimension,
    min_separation,
    periodize,
    point_index,
    replica_mapping_audit,
    sample_manifold,
    swap_sqdists,
)
from wlgeom.errors import (
    DegenerateParametersError,
    InvalidInputError,
    InvalidParameterError,
    SamplingFailureError,
)
from wlgeom.geometry import LabeledPointCloud, pairwise_sqdist
from wlgeom.graph_wl import NeighborhoodPolicy, wl_compare

grid = st.integers(-2**17, 2**17).map(lambda k: k * GRID)


def test_example_pair_coordinates():
    pair = make_degenerate_pair(EXAMPLE_PARAMS)
    assert pair.plus.labels == ("C", "W", "V", "C", "W", "V")
    assert pair.plus.cell == (4.0, None, None)
    np.testing.assert_array_equal(
        pair.plus.positions,
        [[1, 0, 1], [2, 1, 2], [0.5, 3, 0], [3, 0, -1], [4, 1, -2], [2.5, 3, 0]],
    )
    np.testing.assert_array_equal(pair.minus.positions[[0, 3]], [[1, 0, -1], [3, 0, 1]])
    # W, V and their partners are shared
    np.testing.assert_array_equal(pair.plus.positions[[1, 2, 4, 5]], pair.minus.positions[[1, 2, 4, 5]])
    assert point_index(EXAMPLE_PARAMS, "W'") == 4


def test_example_swap_values():
    assert swap_sqdists(make_degenerate_pair(EXAMPLE_PARAMS)) == [(3.0, 3.0, 11.0, 11.0)]


@given(st.integers(1, 2**10).map(lambda k: 4 * k * 2**-8), grid, grid.filter(lambda v: abs(v) >= 1e-3),
       grid, grid, grid, grid)
def test_swap_identity_is_bit_exact_on_grid(p, c_y, c_z, w_y, w_z, v_x, v_y):
    params = DegenerateParams(p, c_y, c_z, w_y, w_z, v_x, v_y)
    for a, b, c, d in swap_sqdists(make_degenerate_pair(params, unchecked=True)):
        assert a == b and c == d


def test_parameter_validation():
    with pytest.raises(DegenerateParametersError):
        DegenerateParams(4, 0, 1e-6, 1, 2, 0.5, 3)
    with pytest.raises(InvalidParameterError):
        DegenerateParams(-4, 0, 1, 1, 2, 0.5, 3)
    with pytest.raises(InvalidParameterError):
        DegenerateParams(4, math.inf, 1, 1, 2, 0.5, 3)
    with pytest.raises(InvalidParameterError):
        ExtraPair("Q", 0, 0, "X")
    with pytest.raises(InvalidInputError):
        EnergyPair(math.nan, 0.0)


def test_params_round_trip_and_dimension():
    p = DegenerateParams(4, 0, 1, 1, 2, 0.5, 3, extras=(ExtraPair("W", 0.5, -1, "W"), ExtraPair("V", 1, 1.5, "V")))
    assert DegenerateParams.from_dict(p.to_dict()) == p
    assert p.dimension == manifold_dimension(2) == 11
    assert manifold_dimension() == 7


def test_extra_pairs_stay_degenerate():
    p = DegenerateParams(4, 0, 1, 1, 2, 0.5, 3, extras=(ExtraPair("W", -1.5, 0.5, "W"), ExtraPair("V", 1.25, -1.5, "V")))
    pair = make_degenerate_pair(p)
    assert len(pair.plus) == 10
    assert all(a == b and c == d for a, b, c, d in swap_sqdists(pair))


def test_certification_catches_a_broken_pair():
    good = make_degenerate_pair(EXAMPLE_PARAMS)
    pos = good.minus.positions.copy()
    pos[1, 1] += 0.25  # W moves in A- only
    broken = DegeneratePair(good.plus, LabeledPointCloud(good.minus.labels, pos, good.minus.cell), EXAMPLE_PARAMS)
    cert = certify_pair(broken)
    assert not cert.passed
    assert any("WL distinguishes" in f for f in cert.failures)
    assert cert.to_dict()["passed"] is False


def test_certification_rejects_identical_structures():
    good = make_degenerate_pair(EXAMPLE_PARAMS)
    cert = certify_pair(DegeneratePair(good.plus, good.plus, EXAMPLE_PARAMS))
    assert cert.failures == ["angular refinement does not separate the pair at iteration 1"]


def test_certificate_contents():
    cert = certify_pair(make_degenerate_pair(EXAMPLE_PARAMS, unchecked=True))
    assert cert.passed
    assert cert.wl_equal == {1.5: True, 3.0: True, 10.0: True}
    assert set(cert.wl_classes.values()) == {(3, 3)}
    assert cert.angular_distinct and cert.angular_first_divergence == 1
    assert cert.congruent is None


def test_make_pair_raises_certification_error():
    # W and V on the z = 0 mirror plane make A- the mirror image of A+
    p = DegenerateParams(4, 0, 1, 0, 0, 1, 0)
    with pytest.raises(CertificationError) as info:
        make_degenerate_pair(p)
    assert info.value.certificate.failures == ["angular refinement does not separate the pair at iteration 1"]
    assert make_degenerate_pair(p, unchecked=True).params == p


def test_periodize_keeps_degeneracy_and_audit():
    base = make_degenerate_pair(EXAMPLE_PARAMS)
    for py, pz in ((6.0, None), (None, 7.0), (6.0, 7.0)):
        pair = periodize(base, py, pz)
        assert pair.plus.cell == (4.0, py, pz)
        assert wl_compare(pair.plus, pair.minus, NeighborhoodPolicy.cutoff(12.0))[0].equal
        assert replica_mapping_audit(pair)
    with pytest.raises(InvalidParameterError):
        periodize(base, -1.0, None)


def test_audit_flags_a_mismatch():
    base = make_degenerate_pair(EXAMPLE_PARAMS)
    shifted = LabeledPointCloud(base.minus.labels, base.minus.positions + np.array([[0, 0, 0]] * 5 + [[0, 0.5, 0]]),
                                base.minus.cell)
    assert not replica_mapping_audit(DegeneratePair(base.plus, shifted, EXAMPLE_PARAMS))


def test_fold_pair_is_certified_and_not_congruent():
    params = DegenerateParams(4, 0.5, 1, 1, 2, 0.5, 0.25)
    fp, fm = fold_pair(make_degenerate_pair(params), 3)
    cert = certify_pair(DegeneratePair(fp, fm, params))
    assert cert.passed and cert.congruent is False
    assert cert.wl_equal == {"full": True}


def test_sampling_is_deterministic_and_worker_independent():
    a = sample_manifold(6, seed=11)
    assert a == sample_manifold(6, seed=11)
    assert a == sample_manifold(6, seed=11, workers=2)
    assert a != sample_manifold(6, seed=12)
    for p in a:
        assert p.p % (4 * GRID) == 0
        assert min_separation(p) >= 0.5
        assert all(getattr(p, k) % GRID == 0 for k in DegenerateParams.FREE)


def test_sampling_with_extras_and_ranges():
    params = sample_manifold(3, seed=5, n_extras=2, ranges={"p": (4.0, 5.0)})
    assert all(len(p.extras) == 2 and 4.0 <= p.p <= 5.0 for p in params)
    assert all(p.dimension == 11 for p in params)


def test_sampling_failure_has_diagnostics():
    with pytest.raises(SamplingFailureError) as info:
        sample_manifold(1, seed=0, ranges={"c_z": (0.0, 1e-4)}, max_retries=20)
    diag = info.value.diagnostics
    assert diag["rejections"] == {"DegenerateParametersError": 20}
    with pytest.raises(InvalidInputError):
        sample_manifold(0, seed=0)
    with pytest.raises(InvalidInputError):
        sample_manifold(1, seed=0, ranges={"q": (0, 1)})


def test_error_floor_values():
    assert error_floor(WATER_ENERGIES) == pytest.approx(math.sqrt((1.675**2 + 0.84**2 + 0.305**2) / 3), abs=1e-12)
    assert round(error_floor(WATER_ENERGIES), 3) == 1.096
    assert error_floor([(1.0, 1.0)]) == 0.0
    assert error_floor([EnergyPair(0.0, 2.0)]) == 1.0
    with pytest.raises(InvalidInputError):
        error_floor([])


def test_catalog_entries():
    cat = builtin_catalog()
    assert set(cat) == {"appendixB", "ring12", "tetramer_like", "example6", "tetrahedra"}
    ring = cat["ring12"]
    d = np.sqrt(pairwise_sqdist(ring.plus))
    assert np.sort(d[0])[1] == pytest.approx(1.0)
    assert np.sort(np.sqrt(pairwise_sqdist(ring.minus))[0])[1] == pytest.approx(1.0)


def test_tetramer_like_is_a_water_cluster():
    entry = builtin_catalog()["tetramer_like"]
    assert entry.params == WATER_PARAMS
    for cloud in (entry.plus, entry.minus):
        d = np.sqrt(pairwise_sqdist(cloud))
        ox = [i for i, lab in enumerate(cloud.labels) if lab == "O"]
        hy = [i for i, lab in enumerate(cloud.labels) if lab == "H"]
        assert len(ox) == 4 and len(hy) == 8
        for o in ox:
            oh = np.sort(d[o, hy])[:2]
            assert np.all((0.95 < oh) & (oh < 1.02))
        oo = d[np.ix_(ox, ox)][np.triu_indices(4, 1)]
        assert oo.min() > 2.5
    cert = certify_pair(DegeneratePair(entry.plus, entry.minus, WATER_PARAMS))
    assert cert.passed and cert.congruent is False
