import time

import numpy as np
import pytest

from rasso.sim import RadarConfig, Scene, Target, synthesize_scene
from rasso.suite import SuiteParams, default_suite, evaluate_pipeline, simulate_suite


@pytest.fixture(scope="session")
def radar():
    return RadarConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def polar(r, az_deg):
    a = np.deg2rad(az_deg)
    return (r * np.sin(a), r * np.cos(a))


def point_scene(r=3.0, az_deg=0.0, frames=1, noise=0.0, seed=0, **target_kw):
    return Scene([Target(polar(r, az_deg), **target_kw)], [], noise, frames, seed)


def build_suite_outcomes():
    """Dev-tuned comparison of Capon and Capon+warp on the default synthetic suite."""
    start = time.perf_counter()
    test_p = SuiteParams()
    dev_p = test_p.development()
    cfg = RadarConfig()
    dev_specs, test_specs = default_suite(dev_p), default_suite(test_p)
    dev = list(zip(dev_specs, simulate_suite(dev_specs, cfg)))
    test = list(zip(test_specs, simulate_suite(test_specs, cfg)))
    out = {name: evaluate_pipeline(name, dev, test) for name in ("capon", "rasso")}
    out["test_specs"] = test_specs
    out["seconds"] = time.perf_counter() - start
    return out


@pytest.fixture(scope="session")
def suite_outcomes():
    return build_suite_outcomes()
