import numpy as np
import pytest

from corrinv.forward import ExponentialLaw, FluxProfile, LinearLaw
from corrinv.geometry import BoundaryTag, DomainSpec

# canonical test layout: grounded bottom and left, measured right,
# corroding top
UNIT_SQUARE = DomainSpec(
    vertices=[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)],
    side_tags=(BoundaryTag.GAMMAD, BoundaryTag.GAMMA2,
               BoundaryTag.GAMMA1, BoundaryTag.GAMMAD),
)


@pytest.fixture
def square():
    return UNIT_SQUARE


@pytest.fixture
def ramp_flux():
    # g(t) = t along the right side, i.e. g = y
    return FluxProfile.polynomial([0.0, 1.0])


@pytest.fixture
def exponential_law():
    return ExponentialLaw(lam=0.1, a=0.5)


@pytest.fixture
def identity_law():
    return LinearLaw(1.0)


def l2_error_on_mesh(mesh, values, exact):
    """Discrete L2 distance between a nodal field and a callable, by the
    3-midpoint rule (exact for quadratics) per triangle."""
    pts = mesh.nodes
    total = 0.0
    for tri in mesh.triangles:
        p = pts[tri]
        area = 0.5 * abs(
            (p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1])
            - (p[2, 0] - p[0, 0]) * (p[1, 1] - p[0, 1]))
        v = values[tri]
        for a, b in ((0, 1), (1, 2), (2, 0)):
            mid = 0.5 * (p[a] + p[b])
            vh = 0.5 * (v[a] + v[b])
            total += area / 3.0 * (vh - exact(mid[0], mid[1])) ** 2
    return float(np.sqrt(total))
