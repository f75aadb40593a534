import json
from pathlib import Path

import numpy as np
import pytest

from gaitswitch import Biped, ModelParams
from gaitswitch.outputs import BezierOutputs, GaitParams, build_bump

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def params():
    return ModelParams()


@pytest.fixture(scope="session")
def biped(params):
    return Biped(params)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)


def make_synthetic_gait(seed: int = 0, beta=None) -> GaitParams:
    """A plausible (not necessarily periodic) gait for unit tests."""
    rng = np.random.default_rng(seed)
    theta_plus, theta_minus = -0.24, 0.24
    ends = np.array(
        [
            [-0.40, -0.28],  # stance knee
            [-0.12, -0.08],  # stance hip
            [0.45, -0.45],   # swing hip
            [0.30, 0.42],    # swing knee
        ]
    )
    coeffs = np.linspace(ends[:, 0], ends[:, 1], 7).T
    coeffs[:, 2:5] += rng.normal(0.0, 0.05, (4, 3))
    coeffs[3, 2:5] += np.array([0.2, 0.35, 0.2])  # swing-knee clearance
    base = BezierOutputs(coeffs, theta_plus, theta_minus)
    bump = build_bump(theta_plus, theta_minus)
    b = np.zeros(4) if beta is None else np.asarray(beta, dtype=float)
    return GaitParams(base, bump, b)


@pytest.fixture()
def synthetic_gait():
    return make_synthetic_gait(0)


# Committed pipeline artifacts (regenerate with the CLI; see fixtures/README).

@pytest.fixture(scope="session")
def base_gait(params):
    from gaitswitch.artifacts import load_gait

    gait, record = load_gait(FIXTURES / "base_gait.json")
    assert record is not None
    return gait, record


@pytest.fixture(scope="session")
def family(params):
    from gaitswitch.artifacts import load_family

    return load_family(FIXTURES / "family_small.json", params)


@pytest.fixture(scope="session")
def small_graph():
    from gaitswitch.graph import SwitchGraph

    with open(FIXTURES / "graph_small.json") as fh:
        return SwitchGraph.from_dict(json.load(fh))


@pytest.fixture(scope="session")
def fast_sim():
    """Ensemble-grade integrator settings: momentum-level quantities carry
    ~1e-9 relative noise here, well under the 1e-6 checks that use them."""
    from gaitswitch.sim import SimConfig

    return SimConfig(rtol=1e-10, atol=1e-10)
