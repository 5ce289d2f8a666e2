import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from nvc13.params import HyperfineTensor, MagneticField, PhysicalConstants, SystemParams

settings.register_profile("repo", deadline=None, suppress_health_check=[HealthCheck.too_slow], derandomize=True)
settings.load_profile("repo")

MHZ = 1e6


@st.composite
def fields(draw, max_field=0.01):
    mag = draw(st.floats(0.0, max_field))
    theta = draw(st.floats(0.0, math.pi))
    phi = draw(st.floats(0.0, 2 * math.pi))
    return MagneticField.polar(mag, theta, phi)


@st.composite
def tensors(draw, max_alpha=20 * MHZ):
    vals = draw(st.lists(st.floats(-max_alpha, max_alpha), min_size=9, max_size=9))
    return HyperfineTensor.from_array(np.reshape(vals, (3, 3)))


@st.composite
def system_params(draw, max_field=0.01, max_alpha=20 * MHZ):
    return SystemParams(PhysicalConstants(), draw(fields(max_field)), draw(tensors(max_alpha)))


def random_params(rng, max_field=0.01, max_alpha=20 * MHZ, min_field=0.0):
    mag = rng.uniform(min_field, max_field)
    f = MagneticField.polar(mag, rng.uniform(0, math.pi), rng.uniform(0, 2 * math.pi))
    return SystemParams(PhysicalConstants(), f, HyperfineTensor.from_array(rng.uniform(-max_alpha, max_alpha, (3, 3))))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
