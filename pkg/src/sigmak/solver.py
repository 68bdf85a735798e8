"""Continuation Newton solver for

    F^t(hat-A[u]) = f e^{-2u}          at interior points
    u_n + mu = mu_hat e^{-u}           on the umbilic boundary
    u = frame                          on framed faces

with hat-A[u] = D^2 u + du (x) du - |du|^2/2 I + A_g on a flat chart.

The discrete equations are imposed row by row: the PDE at interior points
(centered stencils), the boundary condition on the umbilic face with a
second-order one-sided normal difference, Dirichlet rows on framed faces.
t is marched from 0 (semilinear, F^0 = sigma_1/n) to 1.
"""
import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import symfun
from .conformal import (BoundaryData, mean_curvature_transform, radial_schouten_eigenvalues,
                        schouten_from_derivatives)
from .errors import (ContinuationError, InfeasibleIterateError, LineSearchError,
                     NonConvergenceError, ParameterError)
from .grid import Field, first_difference, gradient, hessian, radial_derivatives

log = logging.getLogger(__name__)

DEFAULT_SCHEDULE = tuple(float(t) for t in np.round(np.linspace(0.0, 1.0, 11), 12))
OUTSIDE_HYPOTHESES = "outside existence hypotheses (mu_hat < 0)"


@dataclass
class ProblemSpec:
    """A discrete boundary value problem on a box or radial chart.

    ``A_g`` is a constant (n, n) matrix or a per-point field for a box; for a
    radial chart it is a scalar (field) a with A_g = a I. ``frame`` is a
    Field whose values are imposed on framed faces. ``reference``, when set,
    is an analytic solution used only to report errors.
    """

    n: int
    k: int
    grid: object
    bd: BoundaryData = field(default_factory=BoundaryData)
    A_g: object = None
    f: object = 1.0
    frame: Field = None
    reference: object = None

    def __post_init__(self):
        g = self.grid
        symfun.FunctionalSpec(self.n, self.k, 1.0)
        if g.kind == "box":
            if g.n != self.n:
                raise ParameterError("grid dimension differs from n", grid=g.n, n=self.n)
            if self.frame is None:
                raise ParameterError("box problems need a frame for the non-umbilic faces")
            if self.A_g is not None:
                A = np.asarray(self.A_g, dtype=float)
                A = np.broadcast_to(A, tuple(g.shape) + (self.n, self.n))
                if not np.array_equal(A, np.swapaxes(A, -1, -2)):
                    raise ParameterError("A_g must be symmetric")
                self.A_g = A
        else:
            if g.n != self.n:
                raise ParameterError("radial grid ambient dimension differs from n",
                                     grid=g.n, n=self.n)
            if self.A_g is not None:
                self.A_g = np.broadcast_to(np.asarray(self.A_g, dtype=float), g.shape)
            if self.frame is not None:
                if self.bd.mu != 0.0 or self.bd.mu_hat != 0.0:
                    raise ParameterError(
                        "a framed radial chart has its umbilic face through the centre, "
                        "which needs mu = mu_hat = 0", mu=self.bd.mu, mu_hat=self.bd.mu_hat)
            elif abs(self.bd.mu - 1.0 / g.R) > 1e-12:
                raise ParameterError("a ball of radius R has mu = 1/R for the inner normal",
                                     mu=self.bd.mu, R=g.R)
        if self.frame is not None and self.frame.grid != g:
            raise ParameterError("frame lives on a different grid")
        f = self.f.values if isinstance(self.f, Field) else self.f
        f = np.broadcast_to(np.asarray(f, dtype=float), g.shape)
        if not np.all(f > 0):
            raise ParameterError("right-hand side coefficient f must be positive",
                                 min_f=float(f.min()))
        self.f = f

    @property
    def flags(self):
        return [] if self.bd.within_hypotheses else [OUTSIDE_HYPOTHESES]

    def functional(self, t):
        return symfun.FunctionalSpec(self.n, self.k, t)

    def row_masks(self):
        """(pde, sigma, framed) boolean masks over the grid."""
        g = self.grid
        if g.kind == "box":
            return g.interior_mask(), g.sigma_mask(), g.framed_mask()
        pde = np.ones(g.shape, dtype=bool)
        pde[-1] = False
        last = ~pde
        if self.frame is None:
            return pde, last, np.zeros(g.shape, dtype=bool)
        return pde, np.zeros(g.shape, dtype=bool), last


@dataclass
class SolverConfig:
    newton_tol: float = 1e-9
    max_newton_iters: int = 30
    damping_min: float = 2.0**-12
    t_schedule: tuple = DEFAULT_SCHEDULE
    max_bisections: int = 6
    cone_margin: float = 1e-10
    linear_tol: float = 1e-3
    linear_solver: str = "bicgstab"
    linear_maxiter: int = 5000
    initial_guess: str = "auto"
    sigma_floor: float = 0.1

    def __post_init__(self):
        ts = np.asarray(self.t_schedule, dtype=float)
        if ts.size < 1 or ts[0] != 0.0 or ts[-1] != 1.0 or np.any(np.diff(ts) <= 0):
            raise ParameterError("t schedule must start at 0, end at 1 and increase strictly",
                                 t_schedule=ts.tolist())
        self.t_schedule = tuple(float(t) for t in ts)
        for name in ("newton_tol", "damping_min", "cone_margin", "linear_tol"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")
        if self.max_newton_iters < 1 or self.max_bisections < 0:
            raise ParameterError("iteration limits must be positive")
        if self.linear_solver not in ("bicgstab", "gmres", "direct"):
            raise ParameterError(f"unknown linear solver {self.linear_solver!r}")
        if self.initial_guess not in ("auto", "frame", "default"):
            raise ParameterError(f"unknown initial guess {self.initial_guess!r}")


@dataclass
class Residual:
    interior: Field
    boundary: Field

    def sup(self):
        return float(max(np.max(np.abs(self.interior.values)),
                         np.max(np.abs(self.boundary.values))))


@dataclass
class NewtonStats:
    iterations: int = 0
    residual: float = np.inf
    min_margin: float = np.inf
    linear_iterations: int = 0
    linear_fallbacks: int = 0
    steps: list = field(default_factory=list)


@dataclass
class Monitor:
    sup_grad_sq: float
    sup_hess: float
    sup_conf: float
    ratio: float
    min_premise: float


@dataclass
class StepRecord:
    t: float
    iterations: int
    residual: float
    min_margin: float
    monitor: Monitor
    bisections: int = 0
    linear_fallbacks: int = 0


@dataclass
class SolveReport:
    steps: list
    u: Field
    flags: list = field(default_factory=list)
    error_vs_reference: float = None

    @property
    def final_t(self):
        return self.steps[-1].t if self.steps else None

    @property
    def min_margin(self):
        return min(s.min_margin for s in self.steps)

    def to_dict(self):
        return {
            "final_t": self.final_t,
            "flags": list(self.flags),
            "error_vs_reference": self.error_vs_reference,
            "min_cone_margin": self.min_margin,
            "grid": self.u.grid.header(),
            "steps": [{
                "t": s.t, "iterations": s.iterations, "residual": s.residual,
                "min_cone_margin": s.min_margin, "bisections": s.bisections,
                "linear_fallbacks": s.linear_fallbacks,
                "monitor": vars(s.monitor).copy(),
            } for s in self.steps],
        }


# -- discrete Schouten tensor -------------------------------------------------

def _radial_spectrum(u, spec):
    g = spec.grid
    ur, urr = radial_derivatives(Field(g, u))
    lam_rad, lam_tan = radial_schouten_eigenvalues(ur, urr, g.r)
    lam = np.column_stack([lam_rad] + [lam_tan] * (spec.n - 1))
    if spec.A_g is not None:
        lam = lam + spec.A_g[:, None]
    return lam, ur


def _box_schouten(u, spec):
    g = spec.grid
    H = hessian(Field(g, u))
    grad = np.stack([first_difference(u, h, a) for a, h in enumerate(g.h)], axis=-1)
    return schouten_from_derivatives(grad, H, spec.A_g), grad


def _margins(u, t, spec, pde):
    """Deformed sigma_1..sigma_k at PDE points, shape (P, k)."""
    fs = spec.functional(t)
    if spec.grid.kind == "radial":
        lam, _ = _radial_spectrum(u, spec)
        return symfun.elem_sym_all(symfun.deform(lam[pde], t))[:, 1:fs.k + 1]
    A, _ = _box_schouten(u, spec)
    return symfun.matrix_cone_margins(A[pde], fs)


def _feasibility(u, t, spec):
    pde = spec.row_masks()[0]
    m = _margins(u, t, spec, pde)
    mins = m.min(axis=1)
    worst = int(np.argmin(mins))
    coords = spec.grid.coordinates()[pde][worst]
    return float(mins[worst]), {"worst_point": coords, "margins": m[worst]}


def _require_feasible(u, t, spec, threshold=0.0):
    mm, info = _feasibility(u, t, spec)
    if not mm > threshold:
        raise InfeasibleIterateError(
            f"hat-A[u] leaves the cone Gamma^t at t={t} (min margin {mm:.3e})",
            t=t, min_margin=mm, **info)
    return mm


def residual(u, t, spec):
    """Interior (PDE) and boundary residual fields; zero on rows of the other kind."""
    uv = u.values if isinstance(u, Field) else np.asarray(u, dtype=float)
    g = spec.grid
    pde, sig, framed = spec.row_masks()
    _require_feasible(uv, t, spec)
    fs = spec.functional(t)
    interior = np.zeros(g.shape)
    boundary = np.zeros(g.shape)
    if g.kind == "radial":
        lam, ur = _radial_spectrum(uv, spec)
        Fv = symfun.F_value(fs, lam[pde])
    else:
        A, grad = _box_schouten(uv, spec)
        Fv, _ = symfun.F_matrix(fs, A[pde])
    interior[pde] = Fv - spec.f[pde] * np.exp(-2.0 * uv[pde])
    if np.any(sig):
        un = _normal_derivative(uv, g)
        boundary[sig] = un[sig] + spec.bd.mu - spec.bd.mu_hat * np.exp(-uv[sig])
    if np.any(framed):
        boundary[framed] = uv[framed] - spec.frame.values[framed]
    return Residual(Field(g, interior), Field(g, boundary))


def _normal_derivative(u, g):
    """One-sided second-order inner normal derivative on the umbilic face."""
    out = np.zeros(g.shape)
    if g.kind == "radial":
        h = g.h
        out[-1] = -(3.0 * u[-1] - 4.0 * u[-2] + u[-3]) / (2.0 * h)
        return out
    h = g.h[-1]
    out[..., 0] = (-3.0 * u[..., 0] + 4.0 * u[..., 1] - u[..., 2]) / (2.0 * h)
    return out


# -- Jacobian -----------------------------------------------------------------

def linearize(u, t, spec):
    """Exact Jacobian of the discrete residual as a CSR matrix.

    Interior rows apply v -> F^{ij}(v_ij + u_i v_j + u_j v_i - <du, dv> delta_ij)
    + 2 f e^{-2u} v; umbilic rows v_n + mu_hat e^{-u} v; framed rows v.
    """
    uv = u.values if isinstance(u, Field) else np.asarray(u, dtype=float)
    _require_feasible(uv, t, spec)
    if spec.grid.kind == "radial":
        return _linearize_radial(uv, t, spec)
    return _linearize_box(uv, t, spec)


def _linearize_radial(u, t, spec):
    g = spec.grid
    N, h, r = g.points, g.h, g.r
    fs = spec.functional(t)
    lam, ur = _radial_spectrum(u, spec)
    G = symfun.F_gradient(fs, lam[:-1])
    Grad, Gtan = G[:, 0], G[:, 1:].sum(axis=1)
    c = 2.0 * spec.f[:-1] * np.exp(-2.0 * u[:-1])
    rows, cols, vals = [], [], []

    def add(i, j, v):
        rows.append(np.atleast_1d(i))
        cols.append(np.atleast_1d(j))
        vals.append(np.atleast_1d(v))

    S0 = Grad[0] + Gtan[0]
    add(0, 0, -2.0 * S0 / h**2 + c[0])
    add(0, 1, 2.0 * S0 / h**2)
    j = np.arange(1, N - 1)
    A = Grad[j]
    B = Grad[j] * ur[j] + Gtan[j] * (1.0 / r[j] - ur[j])
    add(j, j - 1, A / h**2 - B / (2.0 * h))
    add(j, j, -2.0 * A / h**2 + c[j])
    add(j, j + 1, A / h**2 + B / (2.0 * h))
    last = N - 1
    if spec.frame is not None:
        add(last, last, 1.0)
    else:
        add(last, last, -3.0 / (2.0 * h) + spec.bd.mu_hat * np.exp(-u[last]))
        add(last, last - 1, 4.0 / (2.0 * h))
        add(last, last - 2, -1.0 / (2.0 * h))
    return sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(N, N)).tocsr()


def _linearize_box(u, t, spec):
    g = spec.grid
    n, h = g.n, g.h
    size = int(np.prod(g.shape))
    idx = np.arange(size).reshape(g.shape)
    strides = [int(np.prod(g.shape[a + 1:])) for a in range(n)]
    pde, sig, framed = spec.row_masks()
    fs = spec.functional(t)
    A, grad = _box_schouten(u, spec)
    _, FF = symfun.F_matrix(fs, A[pde])
    gp = grad[pde]
    b = 2.0 * np.einsum("pij,pj->pi", FF, gp) - np.trace(FF, axis1=1, axis2=2)[:, None] * gp
    c = 2.0 * spec.f[pde] * np.exp(-2.0 * u[pde])
    P = idx[pde]
    rows, cols, vals = [], [], []

    def add(i, j, v):
        rows.append(i)
        cols.append(j)
        vals.append(np.broadcast_to(v, i.shape))

    for a in range(n):
        s, ha = strides[a], h[a]
        add(P, P - s, FF[:, a, a] / ha**2 - b[:, a] / (2.0 * ha))
        add(P, P, -2.0 * FF[:, a, a] / ha**2)
        add(P, P + s, FF[:, a, a] / ha**2 + b[:, a] / (2.0 * ha))
        for bb in range(a + 1, n):
            sb = strides[bb]
            coef = 2.0 * FF[:, a, bb] / (4.0 * ha * h[bb])
            add(P, P + s + sb, coef)
            add(P, P + s - sb, -coef)
            add(P, P - s + sb, -coef)
            add(P, P - s - sb, coef)
    add(P, P, c)
    Q = idx[sig]
    hn = h[-1]
    add(Q, Q, -3.0 / (2.0 * hn) + spec.bd.mu_hat * np.exp(-u[sig]))
    add(Q, Q + 1, 4.0 / (2.0 * hn))
    add(Q, Q + 2, -1.0 / (2.0 * hn))
    D = idx[framed]
    add(D, D, np.ones(D.shape))
    return sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(size, size)).tocsr()


def _solve_linear(J, rhs, cfg, stats):
    if cfg.linear_solver == "direct":
        return spla.spsolve(J.tocsc(), rhs)
    d = J.diagonal()
    d = np.where(np.abs(d) > 0, d, 1.0)
    M = sp.diags(1.0 / d)
    count = [0]

    def cb(_):
        count[0] += 1

    if cfg.linear_solver == "bicgstab":
        x, info = spla.bicgstab(J, rhs, rtol=cfg.linear_tol, M=M, maxiter=cfg.linear_maxiter,
                                callback=cb)
    else:
        # gmres counts maxiter in restart cycles; keep the total inner budget
        restart = min(50, J.shape[0])
        x, info = spla.gmres(J, rhs, rtol=cfg.linear_tol, M=M, restart=restart,
                             maxiter=max(1, cfg.linear_maxiter // restart), callback=cb,
                             callback_type="pr_norm")
    stats.linear_iterations += count[0]
    if info != 0 or not np.all(np.isfinite(x)):
        stats.linear_fallbacks += 1
        log.info("Krylov solve did not reach tolerance (info=%s); using a direct solve", info)
        x = spla.spsolve(J.tocsc(), rhs)
    return x


# -- Newton and continuation --------------------------------------------------

def newton_solve(u0, t, spec, cfg):
    """Damped Newton at fixed t with a cone-feasible backtracking line search."""
    g = spec.grid
    u = np.array(u0.values, dtype=float)
    stats = NewtonStats()
    stats.min_margin = _require_feasible(u, t, spec)
    R = residual(u, t, spec)
    rnorm = R.sup()
    stats.residual = rnorm
    for it in range(cfg.max_newton_iters):
        if rnorm <= cfg.newton_tol:
            return Field(g, u), stats
        J = linearize(u, t, spec)
        rhs = -(R.interior.values + R.boundary.values).ravel()
        du = _solve_linear(J, rhs, cfg, stats).reshape(g.shape)
        s = 1.0
        worst = None
        while s >= cfg.damping_min:
            trial = u + s * du
            mm, info = _feasibility(trial, t, spec)
            if mm >= cfg.cone_margin:
                Rt = residual(trial, t, spec)
                rt = Rt.sup()
                if rt < rnorm:
                    break
            worst = (mm, info)
            s *= 0.5
        else:
            raise LineSearchError(
                f"no feasible decreasing step at t={t} (iteration {it})",
                t=t, iteration=it, last_residual=rnorm,
                worst_margin=None if worst is None else worst[0],
                **({} if worst is None else worst[1]))
        u, R, rnorm = trial, Rt, rt
        stats.iterations = it + 1
        stats.residual = rnorm
        stats.min_margin = min(stats.min_margin, mm)
        stats.steps.append(s)
        log.debug("t=%.4f it=%d step=%.3g residual=%.3e margin=%.3e", t, it + 1, s, rnorm, mm)
    if rnorm <= cfg.newton_tol:
        return Field(g, u), stats
    raise NonConvergenceError(f"Newton did not converge in {cfg.max_newton_iters} iterations",
                              t=t, residual=rnorm)


def initial_guess(spec, cfg):
    """Starting field for the t = 0 solve.

    With a frame (and ``initial_guess`` auto or frame) the frame itself.
    Otherwise u0 = c + q with q = 0 when sigma_1(A_g) >= sigma_floor
    everywhere, else a quadratic bump q = a|x|^2/2 that makes hat-A[q] lie in
    the positive cone; c is set from
    e^{-2c} = mean((1/n) max(sigma_1(hat-A[q]), sigma_floor)) / mean(f).
    """
    g = spec.grid
    if spec.frame is not None and cfg.initial_guess in ("auto", "frame"):
        return spec.frame
    if cfg.initial_guess == "frame":
        raise ParameterError("initial_guess='frame' needs a frame")
    x = g.coordinates()
    r2 = np.sum(x * x, axis=-1)
    if spec.A_g is None:
        s1 = np.zeros(g.shape)
    elif g.kind == "radial":
        s1 = spec.n * spec.A_g
    else:
        s1 = np.trace(spec.A_g, axis1=-2, axis2=-1)
    q = np.zeros(g.shape)
    if np.min(s1) < cfg.sigma_floor:
        q = 0.25 * r2 / max(float(r2.max()), 1e-300)
    if g.kind == "radial":
        lam, _ = _radial_spectrum(q, spec)
        s1q = lam.sum(axis=1)
    else:
        A, _ = _box_schouten(q, spec)
        s1q = np.trace(A, axis1=-2, axis2=-1)
    level = np.mean(np.maximum(s1q, cfg.sigma_floor) / spec.n) / np.mean(spec.f)
    return Field(g, q - 0.5 * np.log(level))


def estimate_monitor(u, bd=None):
    """sup|du|^2, sup|D^2u| (Frobenius), sup e^{-2u}, their ratio
    (sup|du|^2 + sup|D^2u|) / (1 + sup e^{-2u}), and the minimum of
    Delta u - (n-2)/2 |du|^2 over interior points."""
    g = u.grid
    if g.kind == "radial":
        n = g.n
        ur, urr = radial_derivatives(u)
        r = g.r
        with np.errstate(divide="ignore", invalid="ignore"):
            tang = np.where(r > 0, ur / np.where(r > 0, r, 1.0), urr)
        grad_sq = ur * ur
        hess = np.sqrt(urr**2 + (n - 1) * tang**2)
        lap = urr + (n - 1) * tang
        inner = slice(0, -1)
    else:
        n = g.n
        grads = np.stack([d.values for d in gradient(u, bd)], axis=-1)
        H = hessian(u, bd)
        grad_sq = np.sum(grads * grads, axis=-1)
        hess = np.sqrt(np.sum(H * H, axis=(-2, -1)))
        lap = np.trace(H, axis1=-2, axis2=-1)
        inner = g.interior_mask()
    premise = lap - 0.5 * (n - 2) * grad_sq
    sg, sh = float(grad_sq.max()), float(hess.max())
    sc = float(np.exp(-2.0 * u.values).max())
    return Monitor(sg, sh, sc, (sg + sh) / (1.0 + sc), float(premise[inner].min()))


def continuation_solve(spec, cfg=None, u0=None):
    """Solve at t = 0, then march t to 1 warm-starting each step; a failed step
    is bisected up to ``cfg.max_bisections`` times before giving up."""
    cfg = cfg or SolverConfig()
    g = spec.grid
    u = u0 if u0 is not None else initial_guess(spec, cfg)
    steps = []
    failures = (LineSearchError, NonConvergenceError, InfeasibleIterateError)
    try:
        u, st = newton_solve(u, 0.0, spec, cfg)
    except failures as exc:
        raise ContinuationError("the t = 0 solve failed", last_good_t=None,
                                cause=exc.to_dict()) from exc
    steps.append(_record(0.0, u, st, 0, spec))
    t = 0.0
    for target in cfg.t_schedule[1:]:
        step = target - t
        bis = 0
        while t < target:
            t_try = target if t + step >= target - 1e-14 else t + step
            try:
                u_new, st = newton_solve(u, t_try, spec, cfg)
            except failures as exc:
                bis += 1
                if bis > cfg.max_bisections:
                    raise ContinuationError(
                        f"t-step bisection exhausted between t={t} and t={target}",
                        last_good_t=t, cause=exc.to_dict(),
                        steps=[_record_dict(s) for s in steps]) from exc
                step *= 0.5
                log.info("bisecting: t=%.6g failed (%s), new step %.3g", t_try, exc, step)
                continue
            u, t = u_new, t_try
            steps.append(_record(t, u, st, bis, spec))
    err = None
    if spec.reference is not None:
        err = float(np.max(np.abs(u.values - reference_values(spec.reference, g))))
    return SolveReport(steps, u, spec.flags, err)


def _record(t, u, st, bis, spec):
    bd = spec.bd if spec.grid.kind == "box" else None
    return StepRecord(t, st.iterations, st.residual, st.min_margin,
                      estimate_monitor(u, bd), bis, st.linear_fallbacks)


def _record_dict(s):
    return {"t": s.t, "iterations": s.iterations, "residual": s.residual,
            "min_cone_margin": s.min_margin}


def reference_values(ref, grid):
    if grid.kind == "radial":
        return ref.radial_jet(grid.r)[0]
    return ref(grid.coordinates())


def reference_field(ref, grid):
    return Field(grid, reference_values(ref, grid))


def manufacture(u_star, t, spec, exact=None):
    """Right side f = F^t(hat-A[u_star]) e^{2 u_star} and the matching mu_hat.

    Derivatives come from grid differences of ``u_star``, or from the analytic
    jets of ``exact`` when given (then u_star is an exact solution of the
    continuous problem and the discrete solve carries truncation error).
    mu_hat = e^u (u_n + mu) on the umbilic boundary: a float when it is
    constant there, otherwise the array of boundary values.
    """
    g = spec.grid
    fs = spec.functional(t)
    if g.kind == "radial":
        if exact is not None:
            uv, ur, urr = exact.radial_jet(g.r)
        else:
            uv = u_star.values
            ur, urr = radial_derivatives(u_star)
        lam_rad, lam_tan = radial_schouten_eigenvalues(ur, urr, g.r)
        lam = np.column_stack([lam_rad] + [lam_tan] * (spec.n - 1))
        if spec.A_g is not None:
            lam = lam + spec.A_g[:, None]
        _check_manufacture(symfun.elem_sym_all(symfun.deform(lam, t))[:, 1:fs.k + 1])
        Fv = symfun.F_value(fs, lam)
        mu_hat = 0.0 if spec.frame is not None else \
            float(mean_curvature_transform(uv[-1], -ur[-1], spec.bd.mu))
    else:
        if exact is not None:
            uv, grad, H = exact.jet(g.coordinates())
        else:
            uv = u_star.values
            grad = np.stack([d.values for d in gradient(u_star)], axis=-1)
            H = hessian(u_star)
        A = schouten_from_derivatives(grad, H, spec.A_g)
        _check_manufacture(symfun.matrix_cone_margins(A, fs))
        Fv, _ = symfun.F_matrix(fs, A)
        mh = mean_curvature_transform(uv[..., 0], grad[..., 0, -1], spec.bd.mu)
        mu_hat = float(np.mean(mh)) if np.ptp(mh) <= 1e-9 * (1 + np.abs(mh).max()) else mh
    return Field(g, Fv * np.exp(2.0 * uv)), mu_hat


def _check_manufacture(margins):
    mins = margins.min(axis=-1)
    if not np.all(mins > 0):
        flat = margins.reshape(-1, margins.shape[-1])
        worst = int(np.argmin(flat.min(axis=-1)))
        raise InfeasibleIterateError("u_star is not admissible: hat-A leaves the cone",
                                     worst_index=worst, margins=flat[worst])


def with_manufactured_rhs(spec, t=1.0, exact=None):
    """Copy of ``spec`` whose f is manufactured from its reference at parameter t."""
    ref = exact if exact is not None else spec.reference
    f, _ = manufacture(reference_field(ref, spec.grid), t, spec, exact=ref)
    return replace(spec, f=f)
