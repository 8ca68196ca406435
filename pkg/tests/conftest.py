import numpy as np
import pytest
from hypothesis import HealthCheck, assume, settings
from hypothesis import strategies as st

from wlgeom.geometry import LabeledPointCloud

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

# dyadic coordinates keep every difference and squared norm exact
dyadic = st.integers(-64, 64).map(lambda k: k / 16)
coords = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


def _well_separated(pos, min_dist=0.2):
    if len(pos) < 2:
        return True
    d = np.linalg.norm(pos[:, None] - pos[None], axis=-1)
    return d[np.triu_indices(len(pos), 1)].min() > min_dist


@st.composite
def clouds(draw, min_n=1, max_n=7, species="CHO", exact=False):
    n = draw(st.integers(min_n, max_n))
    elem = dyadic if exact else coords
    pos = np.array(draw(st.lists(st.tuples(elem, elem, elem), min_size=n, max_size=n)), dtype=float)
    labels = draw(st.lists(st.sampled_from(species), min_size=n, max_size=n))
    assume(_well_separated(pos))
    return LabeledPointCloud(labels, pos)


@st.composite
def rotations(draw):
    q = np.array(draw(st.tuples(*[st.floats(-1, 1)] * 4)))
    assume(np.linalg.norm(q) > 0.1)
    w, x, y, z = q / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
