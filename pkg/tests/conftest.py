import numpy as np
import pytest

from pheat.fespace import eval_function
from pheat.mesh import locate_point


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def eval_at_points(f, pts, slit_side=None):
    """Evaluate an FeFunction at arbitrary physical points (via point location)."""
    out = np.empty(len(pts))
    for i, x in enumerate(pts):
        tri, lam = locate_point(f.space.mesh, x, slit_side=slit_side)
        out[i] = eval_function(f, tri, lam)
    return out


def random_points_in(mesh, n, rng, margin=0.0):
    """Uniform random points inside the mesh's bounding box, rejected onto the
    domain via containment in some triangle (fine for our convex-ish boxes)."""
    lo = mesh.vertices.min(axis=0) + margin
    hi = mesh.vertices.max(axis=0) - margin
    pts = []
    while len(pts) < n:
        x = rng.uniform(lo, hi)
        try:
            locate_point(mesh, x)
        except Exception:
            continue
        pts.append(x)
    return np.array(pts)
