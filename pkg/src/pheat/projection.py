"""L2-projection, nodal interpolation, and time-averaged boundary data.

Also contains two numerical verification routines: the exponential decay of
the L2-projection away from a localized source, and the empirical order of
the nonlinear stability ||V(grad v) - V(grad Pi_2 v)||_L2 ~ h^alpha under
refinement.
"""

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from . import assembly
from .constitutive import v_transform
from .fespace import FeFunction, build_space, quadrature

LOAD_QUADRATURE_DEGREE = 8   # >= 2r + 2 for all supported degrees


class NonFiniteValue(Exception):
    """Nodal interpolation hit a non-finite value at a DOF node."""


@dataclass
class BoundaryData:
    """Per-step Dirichlet values.

    mode is 'homogeneous' or 'averaged_nodal'; values[m-1] holds the
    boundary-DOF values of step m (aligned with space.boundary_dofs).
    """

    mode: str
    values: list

    def step_values(self, m):
        return self.values[m - 1]


def l2_project(space, g, quad_degree=LOAD_QUADRATURE_DEGREE):
    """Best L2 approximation of g in the (unconstrained) space.

    Solves M c = b with b_i = int g phi_i dx; g is a callable field on
    (n, 2) point arrays or a constant.
    """
    rule = quadrature(max(quad_degree, 2 * space.degree + 2))
    pts = space.physical_points(rule)
    vals = _field_values(g, pts)
    b = assembly.assemble_load(space, vals, rule)
    M = assembly.assemble_mass(space)
    c, _ = assembly.solve_spd(M, b)
    return FeFunction(space, c)


def _field_values(g, pts):
    if np.isscalar(g):
        return np.full(pts.shape[:-1], float(g))
    flat = pts.reshape(-1, 2)
    return np.asarray(g(flat), dtype=float).reshape(pts.shape[:-1])


def nodal_interpolate(space, g):
    """FeFunction with coefficients g(x_i) at the DOF nodes."""
    vals = np.asarray(g(space.dof_coords), dtype=float) if not np.isscalar(g) \
        else np.full(space.ndof, float(g))
    if not np.all(np.isfinite(vals)):
        raise NonFiniteValue("field is not finite at some DOF node")
    return FeFunction(space, vals)


_gauss5 = leggauss(5)


def _gauss_segments(a, b, split=0.0):
    """5-point Gauss nodes/weights on [a, b], split at `split` if interior."""
    bounds = [a, b]
    if a < split < b:
        bounds = [a, split, b]
    nodes, weights = [], []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        nodes.append(mid + half * _gauss5[0])
        weights.append(half * _gauss5[1])
    return np.concatenate(nodes), np.concatenate(weights)


def averaged_boundary_values(space, u_exact, m, grid):
    """Boundary-DOF values (1/|J_m|) int_{J_m} u(x_b, s) ds.

    Uses 5-point Gauss per half-interval of J_m, splitting additionally at
    s = 0 (the |t|^(1/2) kink of the known solution).
    """
    xb = space.dof_coords[space.boundary_dofs]
    total = np.zeros(xb.shape[0])
    length = 0.0
    for lo, hi in grid.window_subintervals(m):
        s, w = _gauss_segments(lo, hi)
        for sk, wk in zip(s, w):
            total += wk * np.asarray(u_exact(xb, sk), dtype=float)
        length += hi - lo
    return total / length


def build_boundary_data(space, grid, mode, u_exact=None):
    if mode == "homogeneous":
        zero = np.zeros(space.boundary_dofs.shape[0])
        return BoundaryData("homogeneous", [zero] * grid.M)
    if mode != "averaged_nodal":
        raise ValueError(f"unknown boundary mode {mode!r}")
    if u_exact is None:
        raise ValueError("averaged_nodal boundary data needs the exact solution")
    return BoundaryData("averaged_nodal",
                        [averaged_boundary_values(space, u_exact, m, grid)
                         for m in range(1, grid.M + 1)])


# ----------------------------------------------------------------------
# verification routines
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class DecayReport:
    q_fit: float
    c_fit: float
    layer_max: np.ndarray

    def csv_rows(self, h):
        return [f"{k},{h!r},{v!r}" for k, v in enumerate(self.layer_max)]


def _element_adjacency(mesh):
    """Triangle neighbors through shared vertices (the omega_T patches)."""
    nv = mesh.num_vertices
    by_vertex = [[] for _ in range(nv)]
    for t, tri in enumerate(mesh.triangles):
        for v in tri:
            by_vertex[v].append(t)
    neighbors = [set() for _ in range(mesh.num_triangles)]
    for owners in by_vertex:
        for t in owners:
            neighbors[t].update(owners)
    return neighbors


def verify_l2_decay(space, g=None, source_tri=None):
    """Exponential decay of Pi_2 applied to a localized source.

    Projects the indicator of one interior triangle (default: the triangle
    whose centroid is closest to the domain's barycenter), takes the maximum
    of |Pi_2 v| per triangle, bins by graph distance from the source, and
    least-squares fits log(max) against the distance.  Returns the per-layer
    decay factor q_fit = exp(slope); a projection that reproduces its input
    (e.g. a constant) yields the degenerate report q_fit = 0.
    """
    mesh = space.mesh
    rule = quadrature(max(2 * space.degree, 2))

    if g is None:
        centroids = mesh.triangle_coords().mean(axis=1)
        target = mesh.vertices.mean(axis=0)
        source = int(np.argmin(np.linalg.norm(centroids - target, axis=1))) \
            if source_tri is None else source_tri
        vals = np.zeros((mesh.num_triangles, rule.num_points))
        vals[source] = 1.0
        b = assembly.assemble_load(space, vals, rule)
        M = assembly.assemble_mass(space)
        c, _ = assembly.solve_spd(M, b)
        proj = FeFunction(space, c)
        exact_in_space = False
    else:
        source = source_tri if source_tri is not None else 0
        proj = l2_project(space, g)
        pts = space.physical_points(rule)
        resid = space.eval_at(rule, proj.coeffs) - _field_values(g, pts)
        exact_in_space = np.sqrt(space.integrate(rule, resid * resid)) < 1e-10

    if exact_in_space:
        return DecayReport(q_fit=0.0, c_fit=0.0, layer_max=np.array([]))

    # max |Pi_2 v| per triangle over its local DOF values
    tri_max = np.max(np.abs(proj.coeffs[space.cell_dofs]), axis=1)

    neighbors = _element_adjacency(mesh)
    dist = np.full(mesh.num_triangles, -1, dtype=int)
    dist[source] = 0
    frontier = [source]
    d = 0
    while frontier:
        d += 1
        nxt = []
        for t in frontier:
            for s in neighbors[t]:
                if dist[s] < 0:
                    dist[s] = d
                    nxt.append(s)
        frontier = nxt
    kmax = dist.max()
    layer_max = np.array([tri_max[dist == k].max() for k in range(kmax + 1)])

    ks = np.arange(1, kmax + 1)          # skip the source layer
    logs = np.log(np.maximum(layer_max[1:], 1e-300))
    slope, intercept = np.polyfit(ks, logs, 1)
    return DecayReport(q_fit=float(np.exp(slope)), c_fit=float(np.exp(intercept)),
                       layer_max=layer_max)


@dataclass(frozen=True)
class VStabilityReport:
    levels: np.ndarray
    h: np.ndarray
    errors: np.ndarray
    order: float

    def csv_rows(self):
        return [f"{int(l)},{h!r},{e!r}" for l, h, e in zip(self.levels, self.h, self.errors)]


def verify_v_stability(space, v, params, quad_degree=8):
    """Empirical order of ||V(grad v) - V(grad Pi_2 v)||_L2 in h.

    Walks the mesh hierarchy from the root up to `space`'s mesh, projects v
    on each level, and fits the error against h.  The order, not any
    smoothness constant, is the reported quantity.
    """
    from .mesh import mesh_quality

    meshes = [space.mesh]
    while meshes[-1].parent is not None:
        meshes.append(meshes[-1].parent)
    meshes.reverse()

    levels, hs, errs = [], [], []
    for m in meshes:
        sp = space if m is space.mesh else build_space(m, space.degree)
        proj = l2_project(sp, v, quad_degree=quad_degree)
        rule = quadrature(quad_degree)
        pts = sp.physical_points(rule)
        flat = pts.reshape(-1, 2)
        grad_exact = np.asarray(v.gradient(flat), dtype=float).reshape(pts.shape)
        diff = v_transform(grad_exact, params) - v_transform(sp.grad_at(rule, proj.coeffs), params)
        err = np.sqrt(sp.integrate(rule, np.sum(diff * diff, axis=-1)))
        levels.append(m.level)
        hs.append(mesh_quality(m).h_max)
        errs.append(err)

    levels, hs, errs = map(np.array, (levels, hs, errs))
    # fit over the last three levels, past the pre-asymptotic templates
    tail = slice(-3, None) if len(hs) >= 3 else slice(None)
    if len(hs) >= 2 and np.all(errs[tail] > 0):
        order = float(np.polyfit(np.log(hs[tail]), np.log(errs[tail]), 1)[0])
    else:
        order = float("nan") if len(hs) < 2 else float("inf")
    return VStabilityReport(levels=levels, h=hs, errors=errs, order=order)
