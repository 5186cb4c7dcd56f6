"""Squared error quantities between trajectories and reference solutions.

Against an exact (closed-form) reference:

    sq_linfty_l2 = max_m || u_(h,m) - <u>_(J_m) ||_L2^2
    sq_l2_v      = sum_m int_(J_m) || V(grad u_(h,m)) - V(grad u(s)) ||_L2^2 ds
    sq_l2_v_avg  = tau sum_m || V(grad u_(h,m)) - <V(grad u)>_(J_m) ||_L2^2
    sq_lp_s      = ( tau sum_m || S(grad u_(h,m)) - <S(grad u)>_(J_m) ||_Lp'^p' )^(2/p')

Against a discrete reference (finer nested mesh, higher degree, finer grid)
the time average acts on the reference snapshots (trapezoidal rule) and the
V / S errors compare against the transformed gradient of the averaged
reference; the two V columns then coincide.

The raw p'-power sum (before the 2/p' exponent) is kept alongside, because
the CSV files store it under the column sqAerr.
"""

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .constitutive import s_flux, v_transform
from .fespace import _reference_bases, quadrature
from .mesh import mesh_quality

ERROR_QUADRATURE_DEGREE = 8

CSV_HEADER = "ndof,M,h,tau,sqVerr,sqVerr1,sqLinftyError,sqAerr"

_CSV_FIELDS = {"sqVerr": "sq_l2_v", "sqVerr1": "sq_l2_v_avg",
               "sqLinftyError": "sq_linfty_l2", "sqAerr": "raw_lp_sum"}


class IncompatibleHierarchy(Exception):
    """Reference mesh/grid does not nest the compared run."""


class InsufficientData(Exception):
    """Need at least two refinement levels to fit an order."""


@dataclass(frozen=True)
class ExactSolution:
    """Closed-form reference: u, grad u and optionally V(grad u), S(grad u).

    t_singular marks a time (e.g. 0) where quadrature intervals are split.
    """

    u: object
    grad_u: object
    v_of_grad: object = None
    s_of_grad: object = None
    t_singular: float = None

    def v_field(self, pts, t, params):
        if self.v_of_grad is not None:
            return np.asarray(self.v_of_grad(pts, t), dtype=float)
        return v_transform(np.asarray(self.grad_u(pts, t), dtype=float), params)

    def s_field(self, pts, t, params):
        if self.s_of_grad is not None:
            return np.asarray(self.s_of_grad(pts, t), dtype=float)
        return s_flux(np.asarray(self.grad_u(pts, t), dtype=float), params)


@dataclass(frozen=True)
class DiscreteReference:
    """Trajectory on a nested finer mesh with a refining time grid."""

    trajectory: object


@dataclass(frozen=True)
class ErrorReport:
    ndof: int
    M: int
    h: float
    tau: float
    sq_linfty_l2: float
    sq_l2_v: float
    sq_l2_v_avg: float
    sq_lp_s: float
    raw_lp_sum: float


@dataclass(frozen=True)
class VErrorBreakdown:
    """Pieces of the orthogonal window decomposition (exact references).

    sq_l2_v equals sum(window_lengths * per_window_avg_sq) + fluctuation up
    to roundoff: the time average over each window is built from the same
    quadrature nodes as the integral, so the cross term cancels exactly.
    """

    sq_l2_v: float
    sq_l2_v_avg: float
    per_window_avg_sq: np.ndarray
    window_lengths: np.ndarray
    fluctuation: float


_gauss5 = leggauss(5)


def _window_time_nodes(grid, m, t_singular):
    nodes, weights = [], []
    for lo, hi in grid.window_subintervals(m):
        pieces = [(lo, hi)]
        if t_singular is not None and lo < t_singular < hi:
            pieces = [(lo, t_singular), (t_singular, hi)]
        for a, b in pieces:
            mid, half = 0.5 * (a + b), 0.5 * (b - a)
            nodes.append(mid + half * _gauss5[0])
            weights.append(half * _gauss5[1])
    return np.concatenate(nodes), np.concatenate(weights)


# ----------------------------------------------------------------------
# exact references
# ----------------------------------------------------------------------

def _exact_window_pass(traj, ref, grid, params, quad_degree):
    """Everything windowed in one sweep; yields per-window quantities."""
    space = traj.space
    rule = quadrature(quad_degree)
    pts = space.physical_points(rule)
    flat = pts.reshape(-1, 2)
    pprime = params.p_conjugate

    for m in range(1, grid.M + 1):
        u_m = traj.snapshots[m].coeffs
        uh = space.eval_at(rule, u_m)
        grad_h = space.grad_at(rule, u_m)
        vh = v_transform(grad_h, params)
        sh = s_flux(grad_h, params)

        s_nodes, s_weights = _window_time_nodes(grid, m, ref.t_singular)
        length = s_weights.sum()

        u_acc = np.zeros_like(uh)
        v_acc = np.zeros_like(vh)
        s_acc = np.zeros_like(sh)
        int_v = 0.0          # int_(J_m) ||V_h - V(s)||^2 ds
        int_vsq = 0.0        # int_(J_m) ||V(s)||^2 ds
        for sk, wk in zip(s_nodes, s_weights):
            v_ex = ref.v_field(flat, sk, params).reshape(vh.shape)
            u_acc += wk * np.asarray(ref.u(flat, sk), dtype=float).reshape(uh.shape)
            v_acc += wk * v_ex
            s_acc += wk * ref.s_field(flat, sk, params).reshape(sh.shape)
            diff = vh - v_ex
            int_v += wk * space.integrate(rule, np.sum(diff * diff, axis=-1))
            int_vsq += wk * space.integrate(rule, np.sum(v_ex * v_ex, axis=-1))

        u_bar = u_acc / length
        v_bar = v_acc / length
        s_bar = s_acc / length

        du = uh - u_bar
        linfty_sq = space.integrate(rule, du * du)
        dv = vh - v_bar
        avg_sq = space.integrate(rule, np.sum(dv * dv, axis=-1))
        vbar_sq = space.integrate(rule, np.sum(v_bar * v_bar, axis=-1))
        ds = np.linalg.norm(sh - s_bar, axis=-1)
        lp_term = space.integrate(rule, ds ** pprime)

        yield dict(m=m, length=length, linfty_sq=linfty_sq, int_v=int_v,
                   avg_sq=avg_sq, fluct=int_vsq - length * vbar_sq, lp_term=lp_term)


def _exact_errors(traj, ref, grid, params, quad_degree):
    tau = grid.tau
    pprime = params.p_conjugate
    linfty = 0.0
    sq_v = 0.0
    per_window = []
    lengths = []
    fluct = 0.0
    raw = 0.0
    for w in _exact_window_pass(traj, ref, grid, params, quad_degree):
        linfty = max(linfty, w["linfty_sq"])
        sq_v += w["int_v"]
        per_window.append(w["avg_sq"])
        lengths.append(w["length"])
        fluct += w["fluct"]
        raw += tau * w["lp_term"]
    per_window = np.array(per_window)
    lengths = np.array(lengths)
    return dict(sq_linfty_l2=linfty, sq_l2_v=sq_v,
                sq_l2_v_avg=tau * per_window.sum(),
                raw_lp_sum=raw, sq_lp_s=raw ** (2.0 / pprime),
                per_window_avg_sq=per_window, window_lengths=lengths,
                fluctuation=fluct)


# ----------------------------------------------------------------------
# discrete references
# ----------------------------------------------------------------------

class _Transfer:
    """Evaluate a coarse FE function at the quadrature points of a nested
    finer mesh (exact, by the nesting invariant)."""

    def __init__(self, coarse_space, fine_space, rule):
        try:
            anc = fine_space.mesh.ancestor_triangles(coarse_space.mesh)
        except ValueError as exc:
            raise IncompatibleHierarchy(str(exc)) from exc
        self.coarse = coarse_space
        pts = fine_space.physical_points(rule)          # (ntf, nq, 2)
        corners = coarse_space.mesh.triangle_coords()[anc]  # (ntf, 3, 2)
        inv_jt = coarse_space.inv_jac_t[anc]            # (J^-1)^T per fine tri
        rel = pts - corners[:, None, 0, :]
        lam12 = np.einsum("tba,tqb->tqa", inv_jt, rel)  # J^-1 (x - a)
        bary = np.concatenate([1.0 - lam12.sum(axis=-1, keepdims=True), lam12], axis=-1)
        ref = _reference_bases[coarse_space.degree]
        flatb = bary.reshape(-1, 3)
        nloc = coarse_space.cell_dofs.shape[1]
        self.basis = ref.values(flatb).reshape(pts.shape[0], pts.shape[1], nloc)
        gref = ref.gradients(flatb).reshape(pts.shape[0], pts.shape[1], nloc, 2)
        self.gbasis = np.einsum("tab,tqlb->tqla", inv_jt, gref)
        self.cell_dofs = coarse_space.cell_dofs[anc]

    def values(self, coeffs):
        return np.einsum("tql,tl->tq", self.basis, coeffs[self.cell_dofs])

    def gradients(self, coeffs):
        return np.einsum("tqla,tl->tqa", self.gbasis, coeffs[self.cell_dofs])


def _trapezoid_average(ref_traj, grid, m):
    """Trapezoidal average of reference snapshots over J_m of the coarse grid."""
    rg = ref_traj.grid
    ratio = rg.M // grid.M
    k0 = (m - 1) * ratio
    k1 = min((m + 1) * ratio, rg.M)
    weights = np.full(k1 - k0 + 1, rg.tau)
    weights[0] = weights[-1] = 0.5 * rg.tau
    coeffs = sum(w * ref_traj.snapshots[k].coeffs
                 for w, k in zip(weights, range(k0, k1 + 1)))
    return coeffs / weights.sum()


def _check_discrete_compat(traj, ref_traj, grid):
    rg = ref_traj.grid
    if not (np.isclose(rg.t0, grid.t0) and np.isclose(rg.t_end, grid.t_end)):
        raise IncompatibleHierarchy("reference grid covers a different interval")
    if rg.M % grid.M != 0:
        raise IncompatibleHierarchy(f"reference M = {rg.M} is not a multiple of M = {grid.M}")


def _discrete_errors(traj, ref, grid, params, quad_degree):
    ref_traj = ref.trajectory
    _check_discrete_compat(traj, ref_traj, grid)
    ref_space = ref_traj.space
    rule = quadrature(quad_degree)
    transfer = _Transfer(traj.space, ref_space, rule)
    tau = grid.tau
    pprime = params.p_conjugate

    linfty = 0.0
    sq_v = 0.0
    raw = 0.0
    for m in range(1, grid.M + 1):
        avg = _trapezoid_average(ref_traj, grid, m)
        uh = transfer.values(traj.snapshots[m].coeffs)
        grad_h = transfer.gradients(traj.snapshots[m].coeffs)
        u_ref = ref_space.eval_at(rule, avg)
        grad_ref = ref_space.grad_at(rule, avg)

        du = uh - u_ref
        linfty = max(linfty, ref_space.integrate(rule, du * du))
        dv = v_transform(grad_h, params) - v_transform(grad_ref, params)
        sq_v += tau * ref_space.integrate(rule, np.sum(dv * dv, axis=-1))
        dsn = np.linalg.norm(s_flux(grad_h, params) - s_flux(grad_ref, params), axis=-1)
        raw += tau * ref_space.integrate(rule, dsn ** pprime)

    return dict(sq_linfty_l2=linfty, sq_l2_v=sq_v, sq_l2_v_avg=sq_v,
                raw_lp_sum=raw, sq_lp_s=raw ** (2.0 / pprime))


def _dispatch(traj, ref, grid, params, quad_degree):
    if isinstance(ref, ExactSolution):
        return _exact_errors(traj, ref, grid, params, quad_degree)
    if isinstance(ref, DiscreteReference):
        return _discrete_errors(traj, ref, grid, params, quad_degree)
    raise TypeError(f"unknown reference type {type(ref)!r}")


# ----------------------------------------------------------------------
# public operations
# ----------------------------------------------------------------------

def err_linfty_l2(traj, ref, grid, params=None, quad_degree=ERROR_QUADRATURE_DEGREE):
    """max_m || u_(h,m) - <u_ref>_(J_m) ||_L2^2 (squared, as reported)."""
    from .constitutive import PLaplaceParams

    params = params or PLaplaceParams(p=2.0)
    return _dispatch(traj, ref, grid, params, quad_degree)["sq_linfty_l2"]


def err_l2_v(traj, ref, grid, params, quad_degree=ERROR_QUADRATURE_DEGREE):
    """(sq_l2_v, sq_l2_v_avg); both equal the averaged form for discrete refs."""
    d = _dispatch(traj, ref, grid, params, quad_degree)
    return d["sq_l2_v"], d["sq_l2_v_avg"]


def err_lp_s(traj, ref, grid, params, quad_degree=ERROR_QUADRATURE_DEGREE):
    """Squared p'-type flux error (the 2/p' power applied to the raw sum)."""
    return _dispatch(traj, ref, grid, params, quad_degree)["sq_lp_s"]


def v_error_breakdown(traj, ref, grid, params, quad_degree=ERROR_QUADRATURE_DEGREE):
    """Window decomposition of sq_l2_v (exact references only)."""
    if not isinstance(ref, ExactSolution):
        raise TypeError("breakdown requires an exact reference")
    d = _exact_errors(traj, ref, grid, params, quad_degree)
    return VErrorBreakdown(sq_l2_v=d["sq_l2_v"], sq_l2_v_avg=d["sq_l2_v_avg"],
                           per_window_avg_sq=d["per_window_avg_sq"],
                           window_lengths=d["window_lengths"],
                           fluctuation=d["fluctuation"])


def compute_error_report(traj, ref, grid, params, quad_degree=ERROR_QUADRATURE_DEGREE):
    d = _dispatch(traj, ref, grid, params, quad_degree)
    return ErrorReport(ndof=traj.space.ndof, M=grid.M,
                       h=mesh_quality(traj.space.mesh).h_max, tau=grid.tau,
                       sq_linfty_l2=d["sq_linfty_l2"], sq_l2_v=d["sq_l2_v"],
                       sq_l2_v_avg=d["sq_l2_v_avg"], sq_lp_s=d["sq_lp_s"],
                       raw_lp_sum=d["raw_lp_sum"])


# ----------------------------------------------------------------------
# empirical orders and output files
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class OrderFit:
    slopes: np.ndarray    # between consecutive levels
    ls_slope: float       # global least-squares fit


_FIELD_TO_CSV = {v: k for k, v in _CSV_FIELDS.items()}


def _report_field(report, name):
    if isinstance(report, dict):
        return report[name] if name in report else report[_FIELD_TO_CSV[name]]
    return getattr(report, _CSV_FIELDS.get(name, name))


def empirical_order(reports, field, against="ndof"):
    """Slopes of log(error) vs log(h | tau | ndof) between levels and by LS fit."""
    if len(reports) < 2:
        raise InsufficientData("need at least two reports")
    x = np.array([float(_report_field(r, against)) for r in reports])
    y = np.array([float(_report_field(r, field)) for r in reports])
    if np.any(y <= 0):
        raise InsufficientData("errors must be positive to fit a log-log slope")
    lx, ly = np.log(x), np.log(y)
    slopes = np.diff(ly) / np.diff(lx)
    ls = float(np.polyfit(lx, ly, 1)[0])
    return OrderFit(slopes=slopes, ls_slope=ls)


def ls_slope_tail(reports, field, against="ndof", k=3):
    """Least-squares slope over the last k levels (the EOC acceptance window)."""
    return empirical_order(reports[-k:], field, against).ls_slope


def _fmt(x):
    return f"{x:.17g}"


def csv_lines(reports):
    lines = [CSV_HEADER]
    for r in reports:
        lines.append(",".join([str(r.ndof), str(r.M), _fmt(r.h), _fmt(r.tau),
                               _fmt(r.sq_l2_v), _fmt(r.sq_l2_v_avg),
                               _fmt(r.sq_linfty_l2), _fmt(r.raw_lp_sum)]))
    return lines


def write_csv(reports, path):
    with open(path, "w") as fh:
        fh.write("\n".join(csv_lines(reports)) + "\n")


def write_dat(reports, path):
    """gnuplot-friendly copy: same numbers, whitespace separated."""
    lines = [line.replace(",", " ") for line in csv_lines(reports)]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_manifest(entries, path):
    with open(path, "w") as fh:
        for key, value in entries.items():
            fh.write(f"{key} = {value}\n")


def read_csv(path):
    """Rows of a results CSV as dicts of floats (ndof, M as ints)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = []
        for line in fh:
            if not line.strip():
                continue
            vals = line.strip().split(",")
            row = dict(zip(header, map(float, vals)))
            row["ndof"] = int(row["ndof"])
            row["M"] = int(row["M"])
            rows.append(row)
    return rows
