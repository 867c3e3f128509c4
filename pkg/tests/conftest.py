import math

import pytest

from armtwin.geometry import Pose
from armtwin.kinematics import JointSpec, KinematicChain, load_builtin_chain
from armtwin.perception_types import PerceptionConfig
from armtwin.world import load_builtin_world

HOME7 = (0.0, 0.6, 0.0, 1.2, 0.0, 1.3, 0.0)


def make_planar2(link=1.0) -> KinematicChain:
    """Two revolute z-joints, links along +x; the spec's analytic workhorse."""
    return KinematicChain(
        name="planar2",
        joints=(
            JointSpec("j1", (0, 0, 1), Pose(), (-math.pi, math.pi)),
            JointSpec("j2", (0, 0, 1), Pose((link, 0, 0)), (-math.pi, math.pi)),
        ),
        link_radii=(0.05, 0.05),
        ee_offset=Pose((link, 0, 0)),
    )


@pytest.fixture(scope="session")
def planar2():
    return make_planar2()


@pytest.fixture(scope="session")
def arm7():
    return load_builtin_chain("arm7")


@pytest.fixture(scope="session")
def tabletop5():
    return load_builtin_world("tabletop5")


@pytest.fixture(scope="session")
def corridor3():
    return load_builtin_world("corridor3")


@pytest.fixture
def noiseless():
    return PerceptionConfig(p_miss=0.0, pos_sigma=0.0, size_sigma=0.0, seed=5)
