"""Damped Newton solver for the discrete Dirichlet problem
S_k(lam(D^2 u)) = f(x, u, Du) on a box, with cone-preserving line search.

The residual is assembled node-wise from the second-difference Hessian;
the Jacobian contracts the per-node tensor F = Q diag(S_k^{pp}) Q^T
against the same stencils, so Newton differentiates exactly the discrete
residual (f_u, f_p enter through the supplied partials or forward
differences).  Ellipticity of the linearization is exactly positivity of
S_k^{pp}, which holds inside the admissible cone; the line search
therefore never accepts an iterate whose worst cone margin drops below a
fraction of its current value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cones import gamma_tilde_margins
from .errors import ConeBreachError, DomainError
from .fdgrid import Grid, GridField, eigh_batch, gradient_field_array, hessian_field_array, laplacian_field
from .symfun import SumHessianOp, s_gradient, s_value

FD_STEP = 1e-6


@dataclass
class ProblemSpec:
    """A discrete Dirichlet problem: operator, grid, right side, boundary.

    rhs maps (x, u, p) -> values with x of shape (N, dim), u (N,) and
    p (N, dim); it must be positive on the sampled domain (checked at
    every assembly).  rhs_u and rhs_p are the optional analytic partials
    with the same calling convention; forward differences are used when
    they are absent.  boundary is the Dirichlet trace: a constant or a
    callable on coordinate arrays (..., dim).
    """

    op: SumHessianOp
    grid: Grid
    rhs: Callable
    rhs_u: Callable | None = None
    rhs_p: Callable | None = None
    boundary: float | Callable = 0.0

    def __post_init__(self):
        if self.op.n != self.grid.dim:
            raise ValueError(
                f"operator dimension {self.op.n} must match grid dimension {self.grid.dim}"
            )

    def boundary_field(self, interior=None) -> GridField:
        interior = np.zeros(self.grid.shape) if interior is None else interior
        return GridField.from_interior(self.grid, interior, boundary=self.boundary)


@dataclass
class SolveConfig:
    rtol: float = 1e-8
    max_iter: int = 60
    armijo: float = 1e-4
    min_step: float = 2.0**-20
    cone_fraction: float = 0.1
    linear_rtol: float = 1e-10
    direct_limit: int = 20_000


@dataclass
class SolveReport:
    """Outcome of one solve: status, histories, and the final field."""

    status: str  # converged | stalled | cone_breach
    iterations: int
    residual_history: list[float]
    cone_margin_history: list[float]
    final_field: GridField
    message: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def to_json_dict(self) -> dict:
        return {
            "status": self.status,
            "iterations": self.iterations,
            "residual_history": self.residual_history,
            "cone_margin_history": self.cone_margin_history,
            "message": self.message,
            "extras": self.extras,
        }


class _NodeState:
    """Everything the Newton step needs at one iterate."""

    def __init__(self, spec: ProblemSpec, u: GridField, check_rhs: bool = True):
        grid = spec.grid
        n = grid.dim
        self.u = u
        self.H = hessian_field_array(u).reshape(-1, n, n)
        self.lams, self.Q = eigh_batch(self.H)
        self.margins = gamma_tilde_margins(spec.op, self.lams).min(axis=-1)
        self.x = grid.interior_points_flat()
        self.uvals = u.interior_flat
        self.grads = gradient_field_array(u).reshape(-1, n)
        self.f = np.asarray(spec.rhs(self.x, self.uvals, self.grads), dtype=float)
        if self.f.shape != self.uvals.shape:
            self.f = np.broadcast_to(self.f, self.uvals.shape).astype(float)
        if check_rhs and not (self.f > 0).all():
            raise DomainError("rhs must be positive on the sampled domain")
        self.sk = np.asarray(s_value(self.lams, spec.op.k, spec.op.alpha), dtype=float)
        self.residual = self.sk - self.f

    @property
    def res_norm(self) -> float:
        return float(np.abs(self.residual).max())

    @property
    def worst_margin(self) -> float:
        return float(self.margins.min())


def _rhs_partials(spec: ProblemSpec, state: _NodeState) -> tuple[np.ndarray, np.ndarray]:
    x, uvals, grads, f = state.x, state.uvals, state.grads, state.f
    if spec.rhs_u is not None:
        fu = np.broadcast_to(np.asarray(spec.rhs_u(x, uvals, grads), float), uvals.shape)
    else:
        du = FD_STEP * (1.0 + np.abs(uvals))
        fu = (np.asarray(spec.rhs(x, uvals + du, grads), float) - f) / du
    if spec.rhs_p is not None:
        fp = np.asarray(spec.rhs_p(x, uvals, grads), float).reshape(grads.shape)
    else:
        fp = np.empty_like(grads)
        for a in range(grads.shape[1]):
            dp = FD_STEP * (1.0 + np.abs(grads[:, a]))
            bumped = grads.copy()
            bumped[:, a] += dp
            fp[:, a] = (np.asarray(spec.rhs(x, uvals, bumped), float) - f) / dp
    return fu, fp


def _stencil_matrix(grid: Grid, F: np.ndarray, fu: np.ndarray | None, fp: np.ndarray | None):
    """Sparse operator v -> sum_ab F^{ab} D_ab v - fu*v - fp . Dv on
    interior nodes, Dirichlet-eliminated (boundary neighbors dropped)."""
    dim = grid.dim
    cells = grid.cells
    h = grid.h
    N = grid.n_interior
    coords = np.stack(
        np.meshgrid(*[np.arange(c) for c in cells], indexing="ij"), axis=-1
    ).reshape(-1, dim)
    strides = np.array([int(np.prod(cells[a + 1 :])) for a in range(dim)])
    idx = coords @ strides

    rows, cols, vals = [], [], []

    def add(offset, coeff):
        nbr = coords + offset
        ok = ((nbr >= 0) & (nbr < np.array(cells))).all(axis=1)
        rows.append(idx[ok])
        cols.append(nbr[ok] @ strides)
        vals.append(coeff[ok])

    center = -fu if fu is not None else np.zeros(N)
    for a in range(dim):
        center = center - 2.0 * F[:, a, a] / (h[a] * h[a])
    add(np.zeros(dim, int), center)

    eye = np.eye(dim, dtype=int)
    for a in range(dim):
        second = F[:, a, a] / (h[a] * h[a])
        first = fp[:, a] / (2.0 * h[a]) if fp is not None else 0.0
        add(eye[a], second - first)
        add(-eye[a], second + first)
    for a in range(dim):
        for b in range(a + 1, dim):
            w = F[:, a, b] / (2.0 * h[a] * h[b])
            add(eye[a] + eye[b], w)
            add(-eye[a] - eye[b], w)
            add(eye[a] - eye[b], -w)
            add(eye[b] - eye[a], -w)

    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)
    ).tocsr()


def assemble_newton(spec: ProblemSpec, u: GridField):
    """Residual vector and Jacobian matrix of the discrete problem at u.

    Requires a strictly admissible iterate: every node's spectrum must
    sit inside the cone with positive margin, otherwise the linearization
    is not elliptic and a ConeBreachError is raised.
    """
    state = _NodeState(spec, u)
    if state.worst_margin <= 0:
        raise ConeBreachError(
            f"iterate leaves the admissible cone (worst margin {state.worst_margin:.3e})"
        )
    sp_grad = s_gradient(state.lams, spec.op.k, spec.op.alpha)
    F = np.einsum("nij,nj,nkj->nik", state.Q, sp_grad, state.Q)
    fu, fp = _rhs_partials(spec, state)
    J = _stencil_matrix(spec.grid, F, fu, fp)
    return state, J


class _LinearSolveError(RuntimeError):
    """The linear residual contract could not be met (Jacobian close to
    singular); the Newton loop reports a stall instead of crashing."""


def _linear_solve(J, rhs, config: SolveConfig) -> np.ndarray:
    Jc = J.tocsc()
    denom = float(np.abs(rhs).max()) or 1.0
    if J.shape[0] <= config.direct_limit:
        lu = spla.splu(Jc)
        delta = lu.solve(rhs)
    else:
        ilu = spla.spilu(Jc, drop_tol=1e-6, fill_factor=20)
        M = spla.LinearOperator(J.shape, ilu.solve)
        delta, info = spla.lgmres(J, rhs, M=M, rtol=1e-12, atol=0.0, maxiter=200)
        lu = spla.splu(Jc) if info != 0 else ilu
        if info != 0:
            delta = lu.solve(rhs)
    # iterative refinement buys back the last digits on stiff Jacobians
    for _ in range(3):
        res = rhs - J @ delta
        if float(np.abs(res).max()) / denom <= config.linear_rtol:
            break
        delta = delta + lu.solve(res)
    lin_res = float(np.abs(J @ delta - rhs).max()) / denom
    if not np.isfinite(lin_res) or lin_res > config.linear_rtol:
        raise _LinearSolveError(
            f"linear solve residual {lin_res:.3e} exceeds {config.linear_rtol:.0e}"
        )
    return delta


def _harmonic_lift(grid: Grid, boundary) -> GridField:
    """Discrete harmonic function with the given Dirichlet trace
    (5/7-point Laplacian, direct solve)."""
    base = GridField.from_interior(grid, np.zeros(grid.shape), boundary=boundary)
    N = grid.n_interior
    eye = np.broadcast_to(np.eye(grid.dim), (N, grid.dim, grid.dim))
    A = _stencil_matrix(grid, eye, None, None)
    b = -laplacian_field(base).interior_flat
    lift = spla.spsolve(A.tocsc(), b)
    return base.with_interior(lift.reshape(grid.shape))


def isotropic_level(op: SumHessianOp, target: float, tol: float = 1e-12) -> float:
    """The c > 0 with S_k(c, ..., c) = target, by bisection (the map is
    increasing in c for positive c)."""
    if target <= 0:
        raise ValueError("target must be positive")

    def val(c):
        return float(s_value(np.full(op.n, c), op.k, op.alpha)) - target

    hi = 1.0
    while val(hi) < 0:
        hi *= 2.0
    lo = 0.0
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if val(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def initial_guess(spec: ProblemSpec) -> GridField:
    """Admissible starting field: a centered isotropic quadratic of level
    c plus the discrete harmonic lift that matches the Dirichlet data.

    c starts at the root of S_k(cI) = 2 sup f.  The lift bends the
    Hessian away from cI (on boxes its mixed derivative is log-singular
    at corners), so multiples of c are scanned, upward first to keep the
    2x headroom when possible, then downward: because the admissible
    cone is not scale invariant, shrinking the field always ends up
    inside it (the alpha term dominates), at the price of a longer
    Newton path.  The first fully admissible candidate wins; if none is
    admissible a ConeBreachError carries the best margin found.
    """
    grid = spec.grid
    x = grid.interior_points_flat()
    f0 = np.asarray(spec.rhs(x, np.zeros(len(x)), np.zeros_like(x)), dtype=float)
    sup_f = float(np.max(f0))
    if sup_f <= 0:
        raise DomainError("rhs must be positive on the sampled domain")
    c_root = isotropic_level(spec.op, 2.0 * sup_f)

    x0 = 0.5 * (np.asarray(grid.lo) + np.asarray(grid.hi))
    qhat = GridField.from_function(grid, lambda pts: 0.5 * ((pts - x0) ** 2).sum(axis=-1))
    lift_g = _harmonic_lift(grid, spec.boundary)
    lift_q = _harmonic_lift(grid, lambda pts: 0.5 * ((pts - x0) ** 2).sum(axis=-1))

    best = None
    best_margin = -math.inf
    factors = (1.0, 1.5, 2.0, 4.0, 0.7, 0.5, 0.35, 0.25, 0.15, 0.1, 0.05, 0.02, 0.01, 0.005)
    for factor in factors:
        c = factor * c_root
        padded = c * (qhat.values - lift_q.values) + lift_g.values
        u0 = GridField(grid, padded)
        margin = _NodeState(spec, u0, check_rhs=False).worst_margin
        if margin > 0:
            return u0
        if margin > best_margin:
            best, best_margin = u0, margin
    raise ConeBreachError(
        f"no admissible initial guess found (best worst-margin {best_margin:.3e}); "
        "try a coarser grid or continuation"
    )


def prolong(u: GridField, fine: Grid, boundary=None) -> GridField:
    """Linear interpolation onto the once-refined grid (cells -> 2c+1).
    When `boundary` is given the exact trace replaces the interpolated
    boundary layer."""
    if fine.cells != tuple(2 * c + 1 for c in u.grid.cells):
        raise ValueError("fine grid must be the refinement of the coarse grid")
    vals = u.values
    for axis in range(u.grid.dim):
        m = vals.shape[axis]
        shape = list(vals.shape)
        shape[axis] = 2 * m - 1
        out = np.empty(shape)
        even = [slice(None)] * len(shape)
        even[axis] = slice(0, None, 2)
        out[tuple(even)] = vals
        odd = [slice(None)] * len(shape)
        odd[axis] = slice(1, None, 2)
        lo = [slice(None)] * len(shape)
        lo[axis] = slice(0, -1)
        hi = [slice(None)] * len(shape)
        hi[axis] = slice(1, None)
        out[tuple(odd)] = 0.5 * (vals[tuple(lo)] + vals[tuple(hi)])
        vals = out
    if boundary is None:
        return GridField(fine, vals)
    interior = vals[tuple(slice(1, -1) for _ in vals.shape)]
    return GridField.from_interior(fine, interior, boundary=boundary)


def solve(spec: ProblemSpec, config: SolveConfig | None = None, u0: GridField | None = None) -> SolveReport:
    """Damped Newton iteration with cone-preserving backtracking.

    Steps halve until (a) every node's cone margin keeps at least
    `cone_fraction` of its current value and (b) the residual satisfies
    an Armijo decrease.  Step underflow with the cone condition binding
    reports cone_breach, otherwise stalled; both keep the best iterate.
    """
    config = config or SolveConfig()
    res_hist: list[float] = []
    margin_hist: list[float] = []
    try:
        u = u0 if u0 is not None else initial_guess(spec)
    except ConeBreachError as exc:
        empty = spec.boundary_field()
        return SolveReport("cone_breach", 0, [], [], empty, message=str(exc))

    state = _NodeState(spec, u)
    if state.worst_margin <= 0:
        return SolveReport(
            "cone_breach", 0, [state.res_norm], [state.worst_margin], u,
            message="starting field is not admissible",
        )
    f_scale = 1.0 + float(np.abs(state.f).max())
    best = (state.res_norm, u)

    for it in range(config.max_iter):
        res_hist.append(state.res_norm)
        margin_hist.append(state.worst_margin)
        if state.res_norm <= config.rtol * f_scale:
            return SolveReport("converged", it, res_hist, margin_hist, u,
                               extras={"f_scale": f_scale})
        try:
            state, J = assemble_newton(spec, u)
        except ConeBreachError as exc:
            return SolveReport("cone_breach", it, res_hist, margin_hist, best[1], message=str(exc))
        try:
            delta = _linear_solve(J, -state.residual, config).reshape(spec.grid.shape)
        except _LinearSolveError as exc:
            return SolveReport("stalled", it, res_hist, margin_hist, best[1], message=str(exc))

        step = 1.0
        accepted = None
        cone_blocked = False
        while step >= config.min_step:
            trial = u.with_interior(u.interior + step * delta)
            tstate = _NodeState(spec, trial, check_rhs=False)
            cone_ok = (tstate.margins >= config.cone_fraction * state.margins).all()
            armijo_ok = tstate.res_norm <= (1.0 - config.armijo * step) * state.res_norm
            if cone_ok and armijo_ok:
                accepted = (trial, tstate)
                break
            cone_blocked = not cone_ok
            step *= 0.5
        if accepted is None:
            status = "cone_breach" if cone_blocked else "stalled"
            return SolveReport(
                status, it + 1, res_hist, margin_hist, best[1],
                message=f"line search underflow at iteration {it} (step < {config.min_step:.1e})",
            )
        u, state = accepted
        if state.res_norm < best[0]:
            best = (state.res_norm, u)

    res_hist.append(state.res_norm)
    margin_hist.append(state.worst_margin)
    if state.res_norm <= config.rtol * f_scale:
        return SolveReport("converged", config.max_iter, res_hist, margin_hist, u,
                           extras={"f_scale": f_scale})
    return SolveReport("stalled", config.max_iter, res_hist, margin_hist, best[1],
                       message="maximum iterations reached")


def continuation_solve(
    spec: ProblemSpec,
    path: Callable[[float], ProblemSpec] | None = None,
    steps: int = 8,
    config: SolveConfig | None = None,
) -> SolveReport:
    """Homotopy from an isotropic constant right side to the target
    problem, warm-starting each stage from the previous solution.

    The default path blends f_t = (1-t)*S_k(cI) + t*f with c chosen as
    in initial_guess; stage failures halve the t-step (down to 2^-8 of
    the original) before giving up with the failing t recorded.
    """
    config = config or SolveConfig()
    if path is None:
        x = spec.grid.interior_points_flat()
        f0 = np.asarray(spec.rhs(x, np.zeros(len(x)), np.zeros_like(x)), dtype=float)
        sup_f = float(np.max(f0))
        if sup_f <= 0:
            raise DomainError("rhs must be positive on the sampled domain")
        s0 = 2.0 * sup_f

        def path(t: float) -> ProblemSpec:
            def rhs(x, u, p, t=t):
                return (1.0 - t) * s0 + t * np.asarray(spec.rhs(x, u, p), dtype=float)

            def rhs_u(x, u, p, t=t):
                if spec.rhs_u is None:
                    return None
                return t * np.asarray(spec.rhs_u(x, u, p), dtype=float)

            def rhs_p(x, u, p, t=t):
                if spec.rhs_p is None:
                    return None
                return t * np.asarray(spec.rhs_p(x, u, p), dtype=float)

            return ProblemSpec(
                op=spec.op,
                grid=spec.grid,
                rhs=rhs,
                rhs_u=rhs_u if spec.rhs_u is not None else None,
                rhs_p=rhs_p if spec.rhs_p is not None else None,
                boundary=spec.boundary,
            )

    ts: list[float] = []
    t = 0.0
    dt = 1.0 / steps
    report = solve(path(0.0), config)
    ts.append(0.0)
    if not report.converged:
        report.extras["continuation_ts"] = ts
        report.extras["failed_t"] = 0.0
        return report
    u = report.final_field
    min_dt = 1.0 / (steps * 256)
    while t < 1.0 - 1e-12:
        t_next = min(1.0, t + dt)
        stage_spec = path(t_next)
        warm = GridField.from_interior(stage_spec.grid, u.interior, boundary=stage_spec.boundary)
        stage = solve(stage_spec, config, u0=warm)
        if stage.converged:
            t = t_next
            u = stage.final_field
            report = stage
            ts.append(t)
            dt = min(2.0 * dt, 1.0 / steps)
        else:
            dt *= 0.5
            if dt < min_dt:
                stage.extras["continuation_ts"] = ts
                stage.extras["failed_t"] = t_next
                return stage
    report.extras["continuation_ts"] = ts
    return report
