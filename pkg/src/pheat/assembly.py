"""Sparse assembly of the per-step systems and an SPD solver front end.

Matrices are scipy CSR; assembly is vectorized over elements and serial, so
repeated assembly of identical inputs is bitwise reproducible.  Dirichlet
conditions are imposed by symmetric elimination (rows and columns zeroed,
unit diagonal), which keeps mass and Jacobian matrices symmetric positive
definite.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

from .constitutive import s_flux, ds_jacobian, phi
from .fespace import quadrature

DIRECT_SOLVE_LIMIT = 40000  # unknowns; above this solve_spd falls back to CG
CG_TOL_DEFAULT = 1e-11
JACOBIAN_EPS_REG = 1e-10


class SpaceMismatch(Exception):
    """Operands built on different finite element spaces."""


class MaxIterations(Exception):
    """CG failed to reach the requested tolerance; carries the report."""

    def __init__(self, report):
        super().__init__(f"CG exceeded {report.iterations} iterations, "
                         f"relative residual {report.relative_residual:.3e}")
        self.report = report


@dataclass(frozen=True)
class LinearSolveReport:
    iterations: int
    relative_residual: float
    method: str


def step_rule(space):
    """Quadrature used for residual/Jacobian/energy: exactness 2r + 2."""
    return quadrature(2 * space.degree + 2)


def _coo_indices(space):
    cache = space._basis_cache.setdefault("_asm", {})
    if "coo" not in cache:
        cd = space.cell_dofs
        nloc = cd.shape[1]
        cache["coo"] = (np.repeat(cd, nloc, axis=1).ravel(),
                        np.tile(cd, (1, nloc)).ravel())
    return cache["coo"]


def _to_csr(space, local):
    """Scatter per-element matrices; the result is symmetrized exactly.

    All matrices assembled here are symmetric; averaging with the transpose
    removes the tiny asymmetry that different duplicate-summation orders
    introduce and is bitwise symmetric (IEEE addition commutes).
    """
    rows, cols = _coo_indices(space)
    mat = sparse.coo_matrix((local.ravel(), (rows, cols)),
                            shape=(space.ndof, space.ndof)).tocsr()
    return 0.5 * (mat + mat.T).tocsr()


def _physical_gradients(space, rule):
    cache = space._basis_cache.setdefault("_physgrad", {})
    key = id(rule)
    if key not in cache:
        _, gref = space.basis_at(rule)
        cache[key] = np.einsum("tab,qlb->tqla", space.inv_jac_t, gref)
    return cache[key]


def assemble_mass(space, rule=None):
    """Gram matrix M_ij = int phi_i phi_j dx, exact up to roundoff."""
    rule = rule or quadrature(2 * space.degree)
    phi_vals, _ = space.basis_at(rule)
    local_ref = np.einsum("q,qi,qj->ij", rule.weights, phi_vals, phi_vals)
    local = space.areas[:, None, None] * local_ref
    return _to_csr(space, local)


def assemble_stiffness(space, coeff=None, rule=None):
    """K_ij = int c(x) grad phi_i . grad phi_j dx with scalar coefficient c.

    coeff is a per-quadrature-point array (nt, nq) or None for c = 1.
    """
    rule = rule or step_rule(space)
    grads = _physical_gradients(space, rule)
    if coeff is None:
        local = np.einsum("q,tqia,tqja->tij", rule.weights, grads, grads, optimize=True)
    else:
        local = np.einsum("q,tq,tqia,tqja->tij", rule.weights, coeff, grads, grads,
                          optimize=True)
    local = 0.5 * (local + local.transpose(0, 2, 1))
    local *= space.areas[:, None, None]
    return _to_csr(space, local)


def assemble_load(space, values, rule=None):
    """Load vector b_i = int f phi_i dx from per-quadrature-point values."""
    rule = rule or step_rule(space)
    phi_vals, _ = space.basis_at(rule)
    local = np.einsum("q,tq,qi->ti", rule.weights, values, phi_vals) \
        * space.areas[:, None]
    return np.bincount(space.cell_dofs.ravel(), weights=local.ravel(),
                       minlength=space.ndof)


def _check_same_space(space, *functions):
    for f in functions:
        if f.space is not space:
            raise SpaceMismatch("FeFunction does not live on the given space")


def assemble_step_residual(space, u, u_prev, tau, f_quad, params, bc_values=None):
    """Residual of the implicit Euler step at state u.

    R_i = (1/tau) int (u - u_prev) phi_i + int S(grad u) . grad phi_i
          - int f phi_i              for interior DOFs,
    R_b = u_b - g_b                  for Dirichlet DOFs.
    """
    _check_same_space(space, u, u_prev)
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    rule = step_rule(space)
    phi_vals, _ = space.basis_at(rule)
    grads = _physical_gradients(space, rule)

    diff_vals = space.eval_at(rule, u.coeffs - u_prev.coeffs)
    grad_u = np.einsum("tqla,tl->tqa", grads, u.coeffs[space.cell_dofs])
    flux = s_flux(grad_u, params)

    local = np.einsum("q,tq,qi->ti", rule.weights, diff_vals / tau, phi_vals)
    local += np.einsum("q,tqa,tqia->ti", rule.weights, flux, grads, optimize=True)
    local -= np.einsum("q,tq,qi->ti", rule.weights, f_quad, phi_vals)
    local *= space.areas[:, None]
    res = np.bincount(space.cell_dofs.ravel(), weights=local.ravel(),
                      minlength=space.ndof)

    b = space.boundary_dofs
    g = np.zeros(b.shape[0]) if bc_values is None else np.asarray(bc_values, dtype=float)
    res[b] = u.coeffs[b] - g
    return res


def assemble_step_jacobian(space, u, tau, params, eps_reg=JACOBIAN_EPS_REG):
    """J = M/tau + K(u), K_ij = int grad phi_i . DS(grad u) grad phi_j dx.

    Dirichlet rows and columns are pinned (unit diagonal).  SPD for p > 1.
    """
    _check_same_space(space, u)
    rule = step_rule(space)
    phi_vals, _ = space.basis_at(rule)
    grads = _physical_gradients(space, rule)
    grad_u = np.einsum("tqla,tl->tqa", grads, u.coeffs[space.cell_dofs])
    ds = ds_jacobian(grad_u, params, eps_reg=eps_reg)

    local = np.einsum("q,qi,qj->ij", rule.weights, phi_vals, phi_vals) / tau
    local = np.broadcast_to(local, (space.mesh.num_triangles,) + local.shape).copy()
    # batched tiny matmuls beat a single big einsum here
    flux = (grads @ ds) @ grads.swapaxes(-1, -2)
    local += np.einsum("q,tqij->tij", rule.weights, flux)
    local = 0.5 * (local + local.transpose(0, 2, 1))
    local *= space.areas[:, None, None]
    mat = _to_csr(space, local)
    return pin_rows_cols(mat, space.boundary_dofs)


def pin_rows_cols(A, dofs):
    """Zero the given rows and columns, put 1 on their diagonal."""
    n = A.shape[0]
    keep = np.ones(n)
    keep[dofs] = 0.0
    P = sparse.diags(keep)
    pinned = np.zeros(n)
    pinned[dofs] = 1.0
    return (P @ A @ P + sparse.diags(pinned)).tocsr()


def apply_dirichlet(A, b, dofs, values):
    """Symmetric elimination: returns (A_pinned, b_adjusted) for u[dofs] = values."""
    n = A.shape[0]
    full = np.zeros(n)
    full[dofs] = values
    b = b - A @ full
    b[dofs] = values
    A = pin_rows_cols(A, dofs)
    return A, b


def step_energy(space, v, u_prev, tau, f_quad, params):
    """Implicit Euler step energy

    E(v) = 1/(2 tau) ||v - u_prev||_L2^2 + int phi(|grad v|) dx - int f v dx

    evaluated with the step quadrature rule (consistent with the residual:
    the interior residual is the exact gradient of this function).
    """
    rule = step_rule(space)
    diff = space.eval_at(rule, v.coeffs - u_prev.coeffs)
    grad_v = space.grad_at(rule, v.coeffs)
    vals_v = space.eval_at(rule, v.coeffs)
    mag = np.linalg.norm(grad_v, axis=-1)
    e = space.integrate(rule, diff * diff) / (2.0 * tau)
    e += space.integrate(rule, phi(mag, params))
    e -= space.integrate(rule, f_quad * vals_v)
    return e


def solve_spd(A, b, tol=CG_TOL_DEFAULT, method=None):
    """Solve SPD system: sparse direct below DIRECT_SOLVE_LIMIT, else Jacobi-CG.

    Returns (x, LinearSolveReport).  Raises MaxIterations if CG does not reach
    the tolerance within 10 n iterations.
    """
    n = A.shape[0]
    if method is None:
        method = "direct" if n <= DIRECT_SOLVE_LIMIT else "cg"
    b = np.asarray(b, dtype=float)
    bnorm = np.linalg.norm(b)
    if method == "direct":
        lu = spla.splu(A.tocsc())
        x = lu.solve(b)
        # two passes of iterative refinement: the step Jacobians can be very
        # ill-conditioned (degenerate gradients next to the slit tip), and the
        # refined solve keeps Newton directions usable down to tiny residuals
        for _ in range(2):
            x = x + lu.solve(b - A @ x)
        rel = np.linalg.norm(A @ x - b) / (bnorm if bnorm > 0 else 1.0)
        return x, LinearSolveReport(iterations=1, relative_residual=float(rel),
                                    method="direct")
    diag = A.diagonal()
    M = sparse.diags(np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 1.0))
    count = [0]

    def cb(_):
        count[0] += 1

    x, info = spla.cg(A, b, rtol=tol, atol=0.0, maxiter=10 * n, M=M, callback=cb)
    rel = np.linalg.norm(A @ x - b) / (bnorm if bnorm > 0 else 1.0)
    report = LinearSolveReport(iterations=count[0], relative_residual=float(rel),
                               method="cg")
    if info > 0:
        raise MaxIterations(report)
    return x, report
