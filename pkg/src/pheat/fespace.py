"""Lagrange finite element spaces of degree 1, 2, 3 on triangle meshes.

DOF ordering is hierarchical and deterministic: vertex DOFs first (numbered
like the mesh vertices), then edge DOFs (edges sorted lexicographically by
their endpoint indices; for cubics two DOFs per edge ordered from the lower
endpoint), then one interior DOF per triangle for cubics.  Slit-duplicated
vertices produce duplicated edges and hence independent DOFs on either side
of the cut.

Quadrature rules are collapsed Gauss(-Jacobi) product rules on the reference
triangle: positive weights, exact for all polynomials up to the requested
degree, and the degree-1 rule degenerates to the centroid rule.  Weights are
normalized to the reference measure, so integrals scale with the physical
triangle area.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_jacobi

from .mesh import locate_point


class UnsupportedDegree(Exception):
    """Polynomial or quadrature degree outside the supported range."""


SUPPORTED_DEGREES = (1, 2, 3)
MAX_QUADRATURE_DEGREE = 20


@dataclass(frozen=True)
class QuadratureRule:
    """Points in barycentric coordinates; weights sum to one."""

    points: np.ndarray
    weights: np.ndarray
    exactness_degree: int

    @property
    def num_points(self):
        return self.weights.shape[0]


_rule_cache = {}


def quadrature(exactness_degree):
    """Quadrature on the reference triangle, exact up to `exactness_degree`."""
    d = int(exactness_degree)
    if not 1 <= d <= MAX_QUADRATURE_DEGREE:
        raise UnsupportedDegree(f"quadrature degree must be in [1, {MAX_QUADRATURE_DEGREE}], got {d}")
    if d in _rule_cache:
        return _rule_cache[d]
    n = (d + 2) // 2  # 2n - 1 >= d
    gx, gw = leggauss(n)
    xi = 0.5 * (gx + 1.0)          # Gauss-Legendre on [0,1]
    wxi = 0.5 * gw
    jx, jw = roots_jacobi(n, 1.0, 0.0)
    eta = 0.5 * (jx + 1.0)         # Gauss-Jacobi, weight (1 - eta), on [0,1]
    weta = 0.25 * jw
    X = np.outer(xi, 1.0 - eta)    # collapsed map (xi, eta) -> (x, y)
    Y = np.broadcast_to(eta, X.shape)
    W = np.outer(wxi, weta)
    x, y, w = X.ravel(), Y.ravel(), W.ravel()
    bary = np.column_stack([1.0 - x - y, x, y])
    # product weights sum to the reference area 1/2; normalize to mass one
    rule = QuadratureRule(points=bary, weights=2.0 * w, exactness_degree=d)
    _rule_cache[d] = rule
    return rule


# ----------------------------------------------------------------------
# reference Lagrange basis via monomial coefficients
# ----------------------------------------------------------------------

_LOCAL_EDGES = ((0, 1), (1, 2), (2, 0))


def _local_nodes(degree):
    """Barycentric coordinates of the local DOF nodes."""
    v = [np.array(b, dtype=float) for b in ((1, 0, 0), (0, 1, 0), (0, 0, 1))]
    nodes = list(v)
    if degree >= 2:
        for a, b in _LOCAL_EDGES:
            if degree == 2:
                nodes.append((v[a] + v[b]) / 2.0)
            else:
                nodes.append((2.0 * v[a] + v[b]) / 3.0)
                nodes.append((v[a] + 2.0 * v[b]) / 3.0)
    if degree == 3:
        nodes.append(np.array([1.0, 1.0, 1.0]) / 3.0)
    return np.array(nodes)


def _monomial_exponents(degree):
    return [(i, j) for total in range(degree + 1) for i in range(total + 1)
            for j in [total - i]]


class _ReferenceBasis:
    """Lagrange basis as monomial expansions in (xi, eta) = (lambda_1, lambda_2)."""

    def __init__(self, degree):
        self.degree = degree
        self.exponents = _monomial_exponents(degree)
        nodes = _local_nodes(degree)
        xi, eta = nodes[:, 1], nodes[:, 2]
        vand = np.column_stack([xi ** i * eta ** j for i, j in self.exponents])
        self.coeffs = np.linalg.inv(vand)  # column k = monomial coeffs of phi_k

    def values(self, bary):
        bary = np.atleast_2d(bary)
        xi, eta = bary[:, 1], bary[:, 2]
        mono = np.column_stack([xi ** i * eta ** j for i, j in self.exponents])
        return mono @ self.coeffs

    def gradients(self, bary):
        """d/d(xi), d/d(eta) of each basis function, shape (nq, nloc, 2)."""
        bary = np.atleast_2d(bary)
        xi, eta = bary[:, 1], bary[:, 2]
        dxi = np.column_stack([i * xi ** max(i - 1, 0) * eta ** j if i else np.zeros_like(xi)
                               for i, j in self.exponents])
        deta = np.column_stack([j * xi ** i * eta ** max(j - 1, 0) if j else np.zeros_like(eta)
                                for i, j in self.exponents])
        return np.stack([dxi @ self.coeffs, deta @ self.coeffs], axis=-1)


_reference_bases = {r: _ReferenceBasis(r) for r in SUPPORTED_DEGREES}


# ----------------------------------------------------------------------
# the space
# ----------------------------------------------------------------------

@dataclass(eq=False)
class FeSpace:
    """Continuous Lagrange space of the given degree over a mesh."""

    mesh: object
    degree: int
    ndof: int
    cell_dofs: np.ndarray            # (nt, nloc)
    dof_coords: np.ndarray           # (ndof, 2)
    boundary_dofs: np.ndarray        # sorted DOF indices on Dirichlet edges
    edges: np.ndarray                # (ne, 2) sorted vertex pairs, lexicographic
    jac: np.ndarray = field(repr=False, default=None)        # (nt, 2, 2)
    inv_jac_t: np.ndarray = field(repr=False, default=None)  # (nt, 2, 2)
    areas: np.ndarray = field(repr=False, default=None)      # (nt,)
    _basis_cache: dict = field(default_factory=dict, repr=False)

    # -- cached reference basis data per quadrature rule -----------------
    def basis_at(self, rule):
        key = id(rule)
        if key not in self._basis_cache:
            ref = _reference_bases[self.degree]
            self._basis_cache[key] = (ref.values(rule.points), ref.gradients(rule.points))
        return self._basis_cache[key]

    @property
    def interior_dofs(self):
        mask = np.ones(self.ndof, dtype=bool)
        mask[self.boundary_dofs] = False
        return np.flatnonzero(mask)

    # -- vectorized evaluation over all triangles ------------------------
    def eval_at(self, rule, coeffs):
        """Function values at all quadrature points, shape (nt, nq)."""
        phi, _ = self.basis_at(rule)
        return np.einsum("ql,tl->tq", phi, coeffs[self.cell_dofs])

    def grad_at(self, rule, coeffs):
        """Gradients at all quadrature points, shape (nt, nq, 2)."""
        _, gref = self.basis_at(rule)
        return np.einsum("tab,qlb,tl->tqa", self.inv_jac_t, gref, coeffs[self.cell_dofs],
                         optimize=True)

    def physical_points(self, rule):
        """Quadrature point coordinates, shape (nt, nq, 2)."""
        corners = self.mesh.triangle_coords()
        return np.einsum("qi,tia->tqa", rule.points, corners)

    def integrate(self, rule, values):
        """Integral over the domain of per-point values, shape (nt, nq)."""
        return float(np.dot(values @ rule.weights, self.areas))

    def cell_integrals(self, rule, values):
        return (values @ rule.weights) * self.areas


@dataclass(eq=False)
class FeFunction:
    """Coefficient vector over a space; the discrete unknown."""

    space: FeSpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.ndof,):
            raise ValueError(f"expected {self.space.ndof} coefficients, got {self.coeffs.shape}")

    def __call__(self, x, slit_side=None):
        tri, lam = locate_point(self.space.mesh, x, slit_side=slit_side)
        return eval_function(self, tri, lam)

    def dump(self, fh):
        fh.write(f"ndof {self.space.ndof} degree {self.space.degree} "
                 f"level {self.space.mesh.level}\n")
        for c in self.coeffs:
            fh.write(f"{float(c)!r}\n")


def build_space(mesh, degree):
    """Enumerate DOFs for the continuous degree-r Lagrange space."""
    if degree not in SUPPORTED_DEGREES:
        raise UnsupportedDegree(f"degree must be one of {SUPPORTED_DEGREES}, got {degree}")
    t = mesh.triangles
    nt, nv = mesh.num_triangles, mesh.num_vertices

    pairs = np.sort(np.concatenate([t[:, [a, b]] for a, b in _LOCAL_EDGES]), axis=1)
    edges = np.unique(pairs, axis=0)
    edge_id = {(int(i), int(j)): k for k, (i, j) in enumerate(edges)}
    ne = edges.shape[0]

    nloc = {1: 3, 2: 6, 3: 10}[degree]
    cell_dofs = np.empty((nt, nloc), dtype=np.int64)
    cell_dofs[:, :3] = t
    if degree >= 2:
        for k, (a, b) in enumerate(_LOCAL_EDGES):
            va, vb = t[:, a], t[:, b]
            lo = np.minimum(va, vb)
            hi = np.maximum(va, vb)
            eid = np.array([edge_id[(int(i), int(j))] for i, j in zip(lo, hi)])
            if degree == 2:
                cell_dofs[:, 3 + k] = nv + eid
            else:
                fwd = va == lo  # local first edge node is the one closer to va
                cell_dofs[:, 3 + 2 * k] = nv + 2 * eid + np.where(fwd, 0, 1)
                cell_dofs[:, 3 + 2 * k + 1] = nv + 2 * eid + np.where(fwd, 1, 0)
    if degree == 3:
        cell_dofs[:, 9] = nv + 2 * ne + np.arange(nt)

    if degree == 1:
        ndof = nv
        dof_coords = mesh.vertices.copy()
    elif degree == 2:
        ndof = nv + ne
        dof_coords = np.vstack([mesh.vertices,
                                0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])])
    else:
        ndof = nv + 2 * ne + nt
        lo = mesh.vertices[edges[:, 0]]
        hi = mesh.vertices[edges[:, 1]]
        centroids = mesh.triangle_coords().mean(axis=1)
        dof_coords = np.vstack([mesh.vertices,
                                np.stack([(2 * lo + hi) / 3.0, (lo + 2 * hi) / 3.0], axis=1
                                         ).reshape(-1, 2),
                                centroids])

    bdofs = set()
    for i, j in mesh.boundary_edges:
        bdofs.add(int(i))
        bdofs.add(int(j))
        if degree >= 2:
            eid = edge_id[(min(int(i), int(j)), max(int(i), int(j)))]
            if degree == 2:
                bdofs.add(nv + eid)
            else:
                bdofs.update((nv + 2 * eid, nv + 2 * eid + 1))
    boundary_dofs = np.array(sorted(bdofs), dtype=np.int64)

    corners = mesh.triangle_coords()
    jac = np.stack([corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0]], axis=-1)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    inv = np.empty_like(jac)
    inv[:, 0, 0] = jac[:, 1, 1] / det
    inv[:, 0, 1] = -jac[:, 0, 1] / det
    inv[:, 1, 0] = -jac[:, 1, 0] / det
    inv[:, 1, 1] = jac[:, 0, 0] / det
    inv_jac_t = np.swapaxes(inv, 1, 2)
    areas = 0.5 * det  # positive by mesh orientation

    return FeSpace(mesh=mesh, degree=degree, ndof=ndof, cell_dofs=cell_dofs,
                   dof_coords=dof_coords, boundary_dofs=boundary_dofs, edges=edges,
                   jac=jac, inv_jac_t=inv_jac_t, areas=areas)


def eval_function(f, tri_index, bary):
    """Value of the FE function at one barycentric point of one triangle."""
    ref = _reference_bases[f.space.degree]
    phi = ref.values(np.asarray(bary, dtype=float))[0]
    return float(phi @ f.coeffs[f.space.cell_dofs[tri_index]])


def eval_gradient(f, tri_index, bary):
    """Gradient of the FE function at one barycentric point of one triangle."""
    ref = _reference_bases[f.space.degree]
    gref = ref.gradients(np.asarray(bary, dtype=float))[0]
    local = f.coeffs[f.space.cell_dofs[tri_index]]
    return f.space.inv_jac_t[tri_index] @ (gref.T @ local)
