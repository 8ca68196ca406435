import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import clouds, dyadic
from wlgeom.errors import (
    InvalidCellError,
    InvalidParameterError,
    ResourceLimitError,
    SelfIntersectingFoldError,
    UnsupportedInputError,
)
from wlgeom.geometry import (
    LabeledPointCloud,
    chord_sqdist,
    fold_radius,
    fold_to_finite,
    gram,
    minimum_image,
    neighbor_arrays,
    neighbor_list,
    pairwise_sqdist,
    sqnorm,
)


def test_cloud_is_immutable_and_validated():
    c = LabeledPointCloud(["C", "O"], [[0, 0, 0], [1, 0, 0]], (2.0, None, None))
    assert c.is_periodic and c.periodic_axes == (0,)
    with pytest.raises(ValueError):
        c.positions[0, 0] = 3.0
    with pytest.raises(InvalidParameterError):
        LabeledPointCloud(["C"], [[0, 0, 0], [1, 1, 1]])
    with pytest.raises(InvalidParameterError):
        LabeledPointCloud(["C"], [[0, math.nan, 0]])
    with pytest.raises(InvalidCellError):
        LabeledPointCloud(["C"], [[0, 0, 0]], (0.0, None, None))
    with pytest.raises(InvalidCellError):
        LabeledPointCloud(["C"], [[0, 0, 0]], (-1.0, None, None))


def test_minimum_image_half_open_box():
    # exactly p/2 stays, -p/2 maps to +p/2
    d = minimum_image([2.0, 0, 0], (4.0, None, None))
    assert d.delta[0] == 2.0 and d.replica_index == (0, 0, 0)
    d = minimum_image([-2.0, 0, 0], (4.0, None, None))
    assert d.delta[0] == 2.0 and d.replica_index == (-1, 0, 0)
    d = minimum_image([7.0, 5.0, -9.0], (4.0, None, 3.0))
    np.testing.assert_array_equal(d.delta, [-1.0, 5.0, 0.0])
    assert d.replica_index == (2, 0, -3)
    assert d.sqdist == 26.0


@given(st.tuples(dyadic, dyadic, dyadic), st.sampled_from([1.0, 2.5, 4.0]))
def test_minimum_image_properties(delta, p):
    cell = (p, p, None)
    d = minimum_image(delta, cell)
    for a in (0, 1):
        assert -p / 2 < d.delta[a] <= p / 2
        assert d.delta[a] == delta[a] - d.replica_index[a] * p
    assert d.delta[2] == delta[2]


def test_neighbor_list_chain_counts():
    # chain with spacing 1 along a period-4 axis
    c = LabeledPointCloud(["C"] * 4, [[k, 0, 0] for k in range(4)], (4.0, None, None))
    assert [len(n) for n in neighbor_list(c, 1.0)] == [2, 2, 2, 2]
    # within 2: +-1, +-2 (the +2 and -2 images are distinct replicas of the same atom)
    assert [len(n) for n in neighbor_list(c, 2.0)] == [4, 4, 4, 4]
    # within 4: includes the two self images at +-4
    nl = neighbor_list(c, 4.0)
    assert len(nl[0]) == 8
    assert sum(1 for nb in nl[0] if nb.index == 0) == 2


def test_neighbor_list_sorted_by_index_then_replica():
    c = LabeledPointCloud(["C", "H"], [[0, 0, 0], [0.5, 0, 0]], (2.0, None, None))
    nl = neighbor_list(c, 3.0)[0]
    keys = [(nb.index, nb.displacement.replica_index) for nb in nl]
    assert keys == sorted(keys)
    for nb in nl:
        expect = c.positions[nb.index] - c.positions[0] + np.array(nb.displacement.replica_index) * [2.0, 0, 0]
        np.testing.assert_array_equal(nb.displacement.delta, expect)


@given(clouds(max_n=5, exact=True), st.sampled_from([(2.0, None, None), (3.0, 2.5, None), (3.0, 3.0, 4.0)]),
       st.sampled_from([1.0, 2.5, 4.0]))
def test_neighbor_relation_is_symmetric(cloud, cell, cutoff):
    c = cloud.with_cell(cell)
    arr = neighbor_arrays(c, cutoff)
    fwd = {(int(i), int(j), tuple(r)): tuple(d) for i, j, r, d in zip(arr.i, arr.j, arr.replica, arr.delta)}
    for (i, j, r), d in fwd.items():
        back = fwd[(j, i, tuple(-x for x in r))]
        assert back == tuple(-x for x in d)
    assert np.all(arr.sqdist <= cutoff * cutoff) and np.all(arr.sqdist > 0)


def test_neighbor_cap_raises():
    c = LabeledPointCloud(["C"] * 3, np.eye(3), (1.0, 1.0, 1.0))
    with pytest.raises(ResourceLimitError):
        neighbor_arrays(c, 5.0, pair_cap=100)
    with pytest.raises(InvalidParameterError):
        neighbor_arrays(c, 0.0)


@given(clouds(max_n=6))
def test_gram_is_psd_and_matches_distances(cloud):
    g = gram(cloud)
    scale = max(1.0, float(np.abs(g).max()))
    assert np.linalg.eigvalsh(g).min() >= -1e-9 * scale
    d2 = pairwise_sqdist(cloud)
    diag = np.diag(g)
    np.testing.assert_allclose(d2, diag[:, None] + diag[None, :] - 2 * g, atol=1e-9 * scale)


def test_gram_rejects_periodic():
    with pytest.raises(UnsupportedInputError):
        gram(LabeledPointCloud(["C"], [[0, 0, 0]], (1.0, None, None)))


def test_sqnorm_fixed_order():
    v = np.array([[0.1, 0.2, 0.3]])
    assert sqnorm(v)[0] == (0.1 * 0.1 + 0.2 * 0.2) + 0.3 * 0.3


def test_fold_places_points_on_cylinder():
    c = LabeledPointCloud(["A", "B"], [[0.0, 0.0, 0.0], [1.0, 0.5, 2.0]], (4.0, None, None))
    f = fold_to_finite(c, 3)
    assert len(f) == 6 and not f.is_periodic
    assert f.labels == ("A", "B") * 3
    r0 = fold_radius(0.0, 4.0, 3)
    assert r0 == pytest.approx(12 / (2 * math.pi))
    np.testing.assert_allclose(np.hypot(f.positions[::2, 0], f.positions[::2, 1]), r0)
    # copy k of A sits at angle 2 pi k / 3
    np.testing.assert_allclose(f.positions[2], [r0 * math.cos(2 * math.pi / 3), r0 * math.sin(2 * math.pi / 3), 0])


@given(st.integers(2, 6), st.lists(st.tuples(dyadic, st.floats(-0.3, 0.3), dyadic), min_size=2, max_size=4))
def test_fold_matches_chord_oracle(copies, pts):
    p = 4.0
    c = LabeledPointCloud(["C"] * len(pts), pts, (p, None, None))
    f = fold_to_finite(c, copies)
    n = len(c)
    d2 = pairwise_sqdist(f)
    for ki in range(copies):
        for kj in range(copies):
            for i in range(n):
                for j in range(n):
                    delta = c.positions[j] - c.positions[i] + np.array([(kj - ki) * p, 0, 0])
                    want = chord_sqdist(delta, c.positions[i, 1], c.positions[j, 1], p, copies)
                    got = d2[ki * n + i, kj * n + j]
                    assert got == pytest.approx(want, rel=1e-9, abs=1e-9)


def test_fold_errors():
    c = LabeledPointCloud(["C"], [[0, -2.0, 0]], (4.0, None, None))
    with pytest.raises(SelfIntersectingFoldError):
        fold_to_finite(c, 2)
    assert len(fold_to_finite(c, 4)) == 4
    with pytest.raises(InvalidParameterError):
        fold_to_finite(c, 1)
    with pytest.raises(UnsupportedInputError):
        fold_to_finite(c.with_cell((4.0, 4.0, None)), 2)


def test_transformed_applies_order_rotation_translation():
    c = LabeledPointCloud(["A", "B"], [[1, 0, 0], [0, 1, 0]])
    rot = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1]], dtype=float)
    t = c.transformed(rot, [0, 0, 1], order=[1, 0])
    assert t.labels == ("B", "A")
    np.testing.assert_array_equal(t.positions, [[-1, 0, 1], [0, 1, 1]])
