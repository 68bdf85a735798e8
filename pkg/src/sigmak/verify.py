"""Sampled brute-force checks of the symmetric-function inequalities, the
structure conditions of the sigma_k^{1/k} family and its F^t deformations,
and the umbilic boundary identities.

Each suite is deterministic given (seed, samples). Tolerances are written as
``slack >= -tol`` where slack = rhs - lhs of the inequality lhs <= rhs and
``scale = 1 + |F(lam)| + |sigma_1(lam)|`` per sample.
"""
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np

from . import symfun
from .conformal import BoundaryData, PointJet, schouten_from_derivatives, \
    schouten_hat, schouten_normal_derivative_identity
from .errors import ParameterError
from .grid import BoxGrid, first_difference, second_difference
from .references import Hemisphere
from .symfun import FunctionalSpec

T_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)
MIN_FILTER_FRACTION = 0.1
MAX_RECORDED_FAILURES = 20


@dataclass
class SuiteReport:
    name: str
    params: dict
    samples: int
    filtered: int
    failures: list = field(default_factory=list)
    worst_slack: float = np.inf

    @property
    def passed(self):
        return not self.failures

    def merge_check(self, label, slack, tol, points=None, extra=None):
        """Fold one vectorized inequality check into the report."""
        slack = np.asarray(slack, dtype=float)
        if slack.size == 0:
            return
        self.worst_slack = min(self.worst_slack, float(slack.min()))
        bad = np.flatnonzero(~(slack >= -np.broadcast_to(tol, slack.shape)))
        for i in bad[:max(0, MAX_RECORDED_FAILURES - len(self.failures))]:
            entry = {"check": label, "slack": float(slack.flat[i]),
                     "tol": float(np.broadcast_to(tol, slack.shape).flat[i])}
            if points is not None:
                entry["point"] = np.asarray(points)[np.unravel_index(i, slack.shape)[0]].tolist()
            if extra is not None:
                entry.update({k: np.asarray(v).flat[i].item() for k, v in extra.items()})
            self.failures.append(entry)
        if len(bad):
            self.params["failure_count"] = self.params.get("failure_count", 0) + len(bad)

    def require_filter(self, requested):
        if self.filtered < MIN_FILTER_FRACTION * requested:
            self.failures.append({"check": "vacuity", "filtered": self.filtered,
                                  "requested": requested})

    def to_dict(self):
        return {"suite": self.name, "params": self.params, "samples": self.samples,
                "filtered": self.filtered, "passed": self.passed,
                "worst_slack": self.worst_slack, "failures": self.failures}


def _scale(spec, lam, F=None):
    if F is None:
        F = symfun.F_value(spec, lam)
    return 1.0 + np.abs(F) + np.abs(lam.sum(axis=-1))


def _with_identity(lam):
    return np.vstack([np.ones((1, lam.shape[1])), lam])


def check_euler_and_gradsum(n, k, t, samples, seed):
    """sum_i lam_i F_i = F and sum_i F_i >= 1 on Gamma^t."""
    spec = FunctionalSpec(n, k, t)
    lam = _with_identity(symfun.sample_cone(n, k, t, samples, seed))
    F = symfun.F_value(spec, lam)
    G = symfun.F_gradient(spec, lam)
    rep = SuiteReport("euler-gradsum", {"n": n, "k": k, "t": t, "seed": seed},
                      len(lam), len(lam))
    rep.merge_check("euler", -np.abs((lam * G).sum(axis=1) - F), 1e-9 * np.abs(F), lam)
    rep.merge_check("gradient-sum", G.sum(axis=1) - 1.0, 1e-9, lam)
    return rep


def check_newton_maclaurin(n, pairs=None, samples=10_000, seed=0):
    """k(n-l+1) s_{l-1} s_k <= l(n-k+1) s_l s_{k-1} on Gamma_k^+ for 0 <= l < k <= n."""
    if pairs is None:
        pairs = [(l, k) for k in range(1, n + 1) for l in range(k)]
    rep = SuiteReport("newton-maclaurin", {"n": n, "pairs": [list(p) for p in pairs],
                                           "seed": seed}, 0, 0)
    for k in sorted({k for _, k in pairs}):
        if not 1 <= k <= n:
            raise ParameterError(f"pair index k={k} out of range", n=n, k=k)
        lam = _with_identity(symfun.sample_cone(n, k, 1.0, samples, seed + 7919 * k))
        rep.samples += len(lam)
        rep.filtered += len(lam)
        sig = symfun.elem_sym_all(lam)
        spec = FunctionalSpec(n, k, 1.0)
        scale = _scale(spec, lam)
        for l, kk in pairs:
            if kk != k:
                continue
            if not 0 <= l < k:
                raise ParameterError(f"pair ({l},{k}) needs 0 <= l < k")
            s_lm1 = sig[:, l - 1] if l >= 1 else np.zeros(len(lam))
            lhs = k * (n - l + 1) * s_lm1 * sig[:, k]
            rhs = l * (n - k + 1) * sig[:, l] * sig[:, k - 1]
            rep.merge_check(f"NM(l={l},k={k})", rhs - lhs, 1e-9 * scale, lam)
    return rep


def check_sigma_ratio(n, k, samples, seed):
    """sigma_{k-1}(Lambda_i) >= sigma_k(lam) / sigma_1(lam) for all i on Gamma_k^+."""
    spec = FunctionalSpec(n, k, 1.0)
    lam = _with_identity(symfun.sample_cone(n, k, 1.0, samples, seed))
    sig = symfun.elem_sym_all(lam)
    ratio = sig[:, k] / sig[:, 1]
    deleted = symfun.elem_sym_deleted(lam, k - 1)
    rep = SuiteReport("sigma-ratio", {"n": n, "k": k, "seed": seed}, len(lam), len(lam))
    rep.merge_check("ratio", deleted - ratio[:, None], 1e-9 * _scale(spec, lam)[:, None], lam)
    return rep


def sample_with_nonpositive_entry(n, k, count, seed):
    """Gaussian (mean e, unit variance) draws in Gamma_k^+ with some lam_i <= 0."""
    rng = np.random.default_rng(seed)
    spec = FunctionalSpec(n, k, 1.0)
    return symfun._rejection_gaussian(rng, spec, count, 1000,
                                      accept=lambda x: x.min(axis=1) <= 0.0)


def check_condition_A(n, k, samples, seed, spot_checks=100):
    """sum_{j != i} d sigma_k/d lam_j <= (n-k) d sigma_k/d lam_i when lam_i <= 0.

    Also spot-checks the same inequality for the normalized F on the first
    ``spot_checks`` samples.
    """
    if not 1 <= k <= n - 1:
        raise ParameterError(f"condition (A) needs 1 <= k <= n-1, got k={k}, n={n}", n=n, k=k)
    lam = sample_with_nonpositive_entry(n, k, samples, seed)
    rep = SuiteReport("condition-A", {"n": n, "k": k, "seed": seed}, samples,
                      int(np.sum(lam.min(axis=1) <= 0.0)))
    rep.require_filter(samples)
    spec = FunctionalSpec(n, k, 1.0)
    scale = _scale(spec, lam)[:, None]
    partial = symfun.elem_sym_deleted(lam, k - 1)
    total = partial.sum(axis=1, keepdims=True)
    others = total - partial
    slack = (n - k) * partial - others
    mask = lam <= 0.0
    rep.merge_check("sigma_k", np.where(mask, slack, np.inf), 1e-9 * scale, lam)
    m = min(spot_checks, len(lam))
    G = symfun.F_gradient(spec, lam[:m])
    slack_F = (n - k) * G - (G.sum(axis=1, keepdims=True) - G)
    rep.merge_check("F", np.where(mask[:m], slack_F, np.inf), 1e-9 * scale[:m], lam[:m])
    return rep


def check_S3(n, k, t, samples, seed):
    """dF^t/dlam_i >= (1/k) F^t / sigma_1(lam)."""
    spec = FunctionalSpec(n, k, t)
    lam = _with_identity(symfun.sample_cone(n, k, t, samples, seed))
    F = symfun.F_value(spec, lam)
    G = symfun.F_gradient(spec, lam)
    bound = (1.0 / k) * F / lam.sum(axis=1)
    rep = SuiteReport("S3", {"n": n, "k": k, "t": t, "seed": seed}, len(lam), len(lam))
    rep.merge_check("S3", G - bound[:, None], 1e-9 * _scale(spec, lam, F)[:, None], lam)
    return rep


_D2 = ((-2, -1.0 / 12), (-1, 16.0 / 12), (0, -30.0 / 12), (1, 16.0 / 12), (2, -1.0 / 12))
_D1 = ((-2, 1.0 / 12), (-1, -8.0 / 12), (1, 8.0 / 12), (2, -1.0 / 12))
HESSIAN_STEP = 3e-4
INTERIOR_MARGIN = 1e-2


def fd_hessian(spec, lam, step):
    """Fourth-order central-difference Hessian of F^t in lam, shape (m, n, n)."""
    m, n = lam.shape
    E = np.eye(n)
    d = step[:, None]

    def ev(x):
        return symfun.F_value(spec, x)

    H = np.zeros((m, n, n))
    for i in range(n):
        H[:, i, i] = sum(c * ev(lam + a * d * E[i]) for a, c in _D2)
        for j in range(i + 1, n):
            v = sum(ca * cb * ev(lam + d * (a * E[i] + b * E[j]))
                    for a, ca in _D1 for b, cb in _D1)
            H[:, i, j] = v
            H[:, j, i] = v
    return H / (step ** 2)[:, None, None]


def interior_samples(spec, lam):
    """Samples whose deformed point keeps a normalized cone margin >= INTERIOR_MARGIN.

    Normalized margin: min_i sigma_i(mu) / |lam|_inf^i, scale invariant.
    """
    mu = symfun.deform(lam, spec.t)
    sig = symfun.elem_sym_all(mu)[:, 1:spec.k + 1]
    size = np.abs(lam).max(axis=1)
    rel = (sig / size[:, None] ** np.arange(1, spec.k + 1)).min(axis=1)
    ok = rel >= INTERIOR_MARGIN
    # the whole difference stencil must stay in the cone
    d = 2.0 * HESSIAN_STEP * size[:, None]
    E = np.eye(lam.shape[1])
    for i in range(lam.shape[1]):
        for j in range(i, lam.shape[1]):
            for si in (-1.0, 1.0):
                for sj in (-1.0, 1.0):
                    ok &= symfun.in_deformed_cone(lam + d * (si * E[i] + sj * E[j]), spec).inside
    return ok


def _segment_concavity(rep, spec, lam, label="midpoint"):
    half = len(lam) // 2
    a, b = lam[:half], lam[half:2 * half]
    mid = 0.5 * (a + b)
    Fm = symfun.F_value(spec, mid)
    avg = 0.5 * (symfun.F_value(spec, a) + symfun.F_value(spec, b))
    rep.merge_check(label, Fm - avg, 1e-9 * _scale(spec, mid, Fm), mid)
    return half


def check_concavity(n, k, t, samples, seed, hessian_samples=None):
    """Midpoint concavity on random segments plus a finite-difference Hessian
    whose largest eigenvalue must stay <= 1e-6 scale at interior samples."""
    spec = FunctionalSpec(n, k, t)
    lam = symfun.sample_cone(n, k, t, 2 * samples, seed)
    rep = SuiteReport("concavity", {"n": n, "k": k, "t": t, "seed": seed}, samples, 0)
    # segment e -> 2e first: equality along rays
    _segment_concavity(rep, spec, np.vstack([np.ones(n), 2.0 * np.ones(n)]), "ray")
    _segment_concavity(rep, spec, lam)
    hs = samples if hessian_samples is None else hessian_samples
    pts = lam[:hs]
    pts = pts[interior_samples(spec, pts)]
    rep.filtered = len(pts)
    rep.params["hessian_samples"] = len(pts)
    rep.require_filter(hs)
    if len(pts):
        step = HESSIAN_STEP * np.abs(pts).max(axis=1)
        top = np.linalg.eigvalsh(fd_hessian(spec, pts, step))[:, -1]
        rep.merge_check("hessian", -top, 1e-6 * _scale(spec, pts), pts)
    return rep


def check_newton_tensor_gradient(n, k, samples, seed):
    """Central differences of sigma_k(P) in each entry against T_{k-1}(P).

    Off-diagonal entries are perturbed as a symmetric pair, whose derivative
    is 2 (T_{k-1})_ij.
    """
    if not 1 <= k <= n:
        raise ParameterError(f"k={k} out of range for n={n}")
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(samples, n, n))
    P = 0.5 * (X + np.swapaxes(X, 1, 2))
    T = symfun.newton_tensor(P, k - 1)
    size = np.abs(P).max(axis=(1, 2))
    step = 1e-5 * (1.0 + size)
    rep = SuiteReport("newton-tensor-gradient", {"n": n, "k": k, "seed": seed},
                      samples, samples)
    norm = np.maximum(1.0, np.abs(T).max(axis=(1, 2)))
    for i, j in combinations_with_replacement(range(n), 2):
        E = np.zeros((n, n))
        E[i, j] = 1.0
        E[j, i] = 1.0
        dE = step[:, None, None] * E
        fd = (symfun.sigma_of_matrix(P + dE, k) - symfun.sigma_of_matrix(P - dE, k)) / (2 * step)
        exact = T[:, i, j] if i == j else 2.0 * T[:, i, j]
        rep.merge_check(f"T[{i},{j}]", -np.abs(fd - exact), 1e-6 * norm,
                        P.reshape(samples, -1))
    return rep


def check_Ft_structure(n, k, t_grid=T_GRID, samples=10_000, seed=0):
    """Positivity, midpoint concavity, positive gradient, (S3) with eps = 1/k,
    homogeneity and F^t(e) = 1 across a grid of deformation parameters."""
    rep = SuiteReport("Ft-structure", {"n": n, "k": k, "t_grid": list(t_grid), "seed": seed},
                      0, 0)
    rng = np.random.default_rng(seed + 104729)
    for t in t_grid:
        spec = FunctionalSpec(n, k, t)
        lam = _with_identity(symfun.sample_cone(n, k, t, samples, seed))
        rep.samples += len(lam)
        rep.filtered += len(lam)
        F = symfun.F_value(spec, lam)
        G = symfun.F_gradient(spec, lam)
        scale = _scale(spec, lam, F)
        rep.merge_check(f"positive(t={t})", F, 0.0 * F - 1e-300, lam)
        rep.merge_check(f"monotone(t={t})", G.min(axis=1), -1e-300 + 0.0 * F, lam)
        rep.merge_check(f"S3(t={t})", G - ((1.0 / k) * F / lam.sum(axis=1))[:, None],
                        1e-9 * scale[:, None], lam)
        c = rng.uniform(0.1, 10.0, size=len(lam))
        Fc = symfun.F_value(spec, c[:, None] * lam)
        rep.merge_check(f"homogeneous(t={t})", -np.abs(Fc - c * F), 1e-9 * c * scale, lam)
        rep.merge_check(f"normalized(t={t})",
                        -np.atleast_1d(abs(symfun.F_value(spec, np.ones(n)) - 1.0)), 1e-12)
        _segment_concavity(rep, spec, lam[1:], f"concave(t={t})")
    return rep


# -- boundary identities ------------------------------------------------------

def _case_b_field(mu_hat):
    """u = v(x') + x_n mu_hat e^{-v(x')} + x_n^2 w(x'): u_n = mu_hat e^{-u} on x_n = 0
    along the whole face (flat face, mu = 0)."""

    def u(x):
        x1, x2, xn = x[..., 0], x[..., 1], x[..., -1]
        v = 0.3 * np.sin(x1) + 0.2 * x2**2 + 0.1 * x1 * x2
        w = 0.25 + 0.1 * np.cos(x2)
        return v + xn * mu_hat * np.exp(-v) + xn**2 * w

    return u


def boundary_identity_residual(u_func, N, bd):
    """Sup over umbilic-face points and tangential pairs of the hat-A_{ab,n}
    identity residual, with all derivatives taken by grid differences.

    Tangential derivatives are centered; normal derivatives are second-order
    one-sided; u_{ab n} is the one-sided normal difference of the Hessian field.
    """
    g = BoxGrid(3, (N, N, N))
    v = u_func(g.coordinates())
    h = g.h
    n = g.n
    firsts = [first_difference(v, h[a], a) for a in range(n)]
    H = np.empty(v.shape + (n, n))
    for a in range(n):
        H[..., a, a] = second_difference(v, h[a], a)
        for b in range(a + 1, n):
            H[..., a, b] = H[..., b, a] = first_difference(firsts[a], h[b], b)
    hn = h[-1]
    third = (-3.0 * H[..., 0, :, :] + 4.0 * H[..., 1, :, :] - H[..., 2, :, :]) / (2.0 * hn)
    mask = g.sigma_mask()[..., 0]
    worst = 0.0
    grad0 = np.stack([f[..., 0] for f in firsts], axis=-1)
    for idx in zip(*np.nonzero(mask)):
        jet = PointJet(v[idx + (0,)], grad0[idx], H[idx + (0,)])
        A_hat = schouten_hat(jet)
        for a in range(n - 1):
            for b in range(a, n - 1):
                r = schouten_normal_derivative_identity(jet, third[idx][a, b], bd, a, b, A_hat)
                worst = max(worst, abs(r))
    return worst


def _observed_orders(hs, errs):
    hs, errs = np.asarray(hs), np.asarray(errs)
    return (np.log(errs[:-1] / errs[1:]) / np.log(hs[:-1] / hs[1:])).tolist()


def check_boundary_identities(grid_sizes=(9, 17, 33), cases=("a", "b"), samples=200, seed=0,
                              n=3, k=2, min_order=1.8):
    """(a) F^{alpha n} = 0 for boundary jets satisfying the boundary condition;
    (b) refinement order of the hat-A_{ab,n} identity residual."""
    rep = SuiteReport("boundary-identities",
                      {"grid_sizes": list(grid_sizes), "cases": list(cases), "seed": seed,
                       "n": n, "k": k}, 0, 0)
    rng = np.random.default_rng(seed)
    for case in cases:
        mu_hat = 0.0 if case == "a" else 1.0
        # part (a): random admissible jets, curved or flat background boundary
        for t in T_GRID:
            spec = FunctionalSpec(n, k, t)
            lam = symfun.sample_cone(n, k, t, samples, int(rng.integers(1 << 31)))
            mu = rng.uniform(-1.0, 1.0, size=samples)
            offdiag = []
            for s in range(samples):
                jet = boundary_jet_from_spectrum(lam[s], BoundaryData(mu[s], mu_hat), rng)
                _, dF = symfun.F_matrix(spec, schouten_hat(jet))
                offdiag.append(np.abs(dF[:-1, -1]).max())
            rep.samples += samples
            rep.filtered += samples
            rep.merge_check(f"F^(alpha n)=0 case {case} t={t}", -np.asarray(offdiag), 1e-9, lam)
        # part (b): refinement order on the flat face
        u_func = Hemisphere() if case == "a" else _case_b_field(mu_hat)
        bd = BoundaryData(0.0, mu_hat)
        hs = [2.0 / (N - 1) for N in grid_sizes]
        errs = [boundary_identity_residual(u_func, N, bd) for N in grid_sizes]
        orders = _observed_orders(hs, errs)
        rep.params[f"case_{case}_errors"] = errs
        rep.params[f"case_{case}_orders"] = orders
        rep.merge_check(f"order case {case}", np.array([orders[-1] - min_order]), 0.0)
    return rep


def boundary_jet_from_spectrum(lam, bd, rng):
    """A boundary jet whose hat-A is block diagonal with spectrum ``lam``.

    The gradient is random apart from u_n, which the boundary condition fixes;
    u_{alpha n} then follows the mixed-derivative identity, so hat-A_{alpha n}
    vanishes.
    """
    n = len(lam)
    u = rng.normal(scale=0.5)
    grad = rng.normal(scale=0.5, size=n)
    grad[-1] = bd.normal_derivative(u)
    Q, _ = np.linalg.qr(rng.normal(size=(n - 1, n - 1)))
    A = np.zeros((n, n))
    A[:-1, :-1] = Q @ np.diag(lam[:-1]) @ Q.T
    A[-1, -1] = lam[-1]
    g2 = grad @ grad
    hess = A - np.outer(grad, grad) + 0.5 * g2 * np.eye(n)
    em = np.exp(-u)
    hess[:-1, -1] = bd.mu * grad[:-1] - bd.mu_hat * grad[:-1] * em
    hess[-1, :-1] = hess[:-1, -1]
    hess = 0.5 * (hess + hess.T)
    return PointJet(u, grad, hess)


SUITES = {
    "euler-gradsum": check_euler_and_gradsum,
    "newton-maclaurin": check_newton_maclaurin,
    "sigma-ratio": check_sigma_ratio,
    "condition-a": check_condition_A,
    "s3": check_S3,
    "concavity": check_concavity,
    "newton-tensor-gradient": check_newton_tensor_gradient,
    "ft-structure": check_Ft_structure,
    "boundary-identities": check_boundary_identities,
}


def run_suites(names, ns, ks=None, ts=T_GRID, samples=10_000, seeds=(7,)):
    """Run the named suites over an (n, k, t, seed) sweep; yields SuiteReports.

    ``ks=None`` means every valid k for each n (k <= n-1 for condition (A)).
    """
    for name in names:
        fn = SUITES[name]
        for seed in seeds:
            if name == "boundary-identities":
                yield fn(seed=seed)
                continue
            for n in ns:
                if name == "newton-maclaurin":
                    kk = range(1, n + 1) if ks is None else [k for k in ks if k <= n]
                    pairs = [(l, k) for k in kk for l in range(k)]
                    yield fn(n, pairs, samples, seed)
                    continue
                valid = range(1, n) if name == "condition-a" else range(1, n + 1)
                for k in (valid if ks is None else [k for k in ks if k in valid]):
                    if name in ("euler-gradsum", "s3", "concavity"):
                        for t in ts:
                            yield fn(n, k, t, samples, seed)
                    elif name == "ft-structure":
                        yield fn(n, k, tuple(ts), samples, seed)
                    else:
                        yield fn(n, k, samples, seed)
