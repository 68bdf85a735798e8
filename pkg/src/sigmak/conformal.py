"""Pointwise conformal formulas on a flat background.

Conventions: the last coordinate is the normal one and ``n`` points INTO the
domain. For a ball of radius R the umbilic boundary then has principal
curvature mu = +1/R; a flat face has mu = 0. Tangential indices are
0..n-2, the normal index is n-1. Jets are taken in an orthonormal frame at
the point, so g_ab = delta_ab.
"""
from dataclasses import dataclass

import numpy as np

from .errors import IdentityPreconditionError, ParameterError


@dataclass(frozen=True)
class PointJet:
    u: float
    grad: np.ndarray
    hess: np.ndarray

    def __post_init__(self):
        grad = np.asarray(self.grad, dtype=float)
        hess = np.asarray(self.hess, dtype=float)
        n = grad.shape[-1]
        if hess.shape != (n, n):
            raise ParameterError("hessian shape does not match gradient",
                                 grad=list(grad.shape), hess=list(hess.shape))
        if not np.array_equal(hess, hess.T):
            raise ParameterError("hessian must be symmetric")
        object.__setattr__(self, "grad", grad)
        object.__setattr__(self, "hess", hess)

    @property
    def n(self):
        return self.grad.shape[0]

    @property
    def u_n(self):
        return self.grad[-1]


@dataclass(frozen=True)
class BoundaryData:
    """Umbilic boundary: background curvature ``mu`` and target ``mu_hat``."""

    mu: float = 0.0
    mu_hat: float = 0.0

    @property
    def case(self):
        return "a" if self.mu_hat == 0.0 else "b"

    @property
    def within_hypotheses(self):
        # case (b) needs a positive constant mu_hat
        return self.mu_hat >= 0.0

    def normal_derivative(self, u):
        """The value u_n is forced to take: mu_hat e^{-u} - mu."""
        return self.mu_hat * np.exp(-u) - self.mu


def schouten_from_derivatives(grad, hess, A_g=None):
    """Batched hat-A = hess + du (x) du - |du|^2/2 I + A_g over leading axes."""
    grad = np.asarray(grad, dtype=float)
    hess = np.asarray(hess, dtype=float)
    n = grad.shape[-1]
    if hess.shape[-2:] != (n, n):
        raise ParameterError("dimension mismatch between gradient and hessian",
                             grad=list(grad.shape), hess=list(hess.shape))
    g2 = np.einsum("...i,...i->...", grad, grad)
    A = hess + grad[..., :, None] * grad[..., None, :] - 0.5 * g2[..., None, None] * np.eye(n)
    if A_g is not None:
        A_g = np.asarray(A_g, dtype=float)
        if A_g.shape[-2:] != (n, n):
            raise ParameterError("background Schouten tensor has wrong dimension",
                                 shape=list(A_g.shape), n=n)
        A = A + A_g
    return A


def schouten_hat(jet, A_g=None):
    """Conformal Schouten tensor of e^{-2u} g for a flat g, as a matrix in g."""
    return schouten_from_derivatives(jet.grad, jet.hess, A_g)


def mean_curvature_transform(u, u_n, mu):
    """Umbilic curvature after the conformal change: mu_hat = e^u (u_n + mu)."""
    return np.exp(u) * (u_n + mu)


def boundary_residual(jet, bd):
    return jet.u_n + bd.mu - bd.mu_hat * np.exp(-jet.u)


def _require_bc(jet, bd, tol):
    r = boundary_residual(jet, bd)
    if abs(r) > tol:
        raise IdentityPreconditionError(
            "jet violates the boundary condition u_n + mu = mu_hat e^{-u}",
            residual=float(r), tol=tol)


def _check_tangential(jet, *idx):
    for a in idx:
        if not 0 <= a < jet.n - 1:
            raise ParameterError(f"tangential index {a} out of range for n={jet.n}", index=a)


def tangential_normal_mixed_second(jet, bd, alpha, tol=1e-8):
    """Predicted u_{n alpha} = mu u_alpha - mu_hat u_alpha e^{-u}."""
    _check_tangential(jet, alpha)
    _require_bc(jet, bd, tol)
    ua = jet.grad[alpha]
    return bd.mu * ua - bd.mu_hat * ua * np.exp(-jet.u)


def tangential_hessian_normal_derivative(jet, bd, alpha, beta, tol=1e-8):
    """Predicted third derivative u_{alpha beta n} on the boundary."""
    _check_tangential(jet, alpha, beta)
    _require_bc(jet, bd, tol)
    mu, mh = bd.mu, bd.mu_hat
    em = np.exp(-jet.u)
    d = 1.0 if alpha == beta else 0.0
    H = jet.hess
    return ((2.0 * mu - mh * em) * H[alpha, beta]
            - mu * H[-1, -1] * d
            + mh * jet.grad[alpha] * jet.grad[beta] * em
            - mu * (-mu + mh * em) ** 2 * d)


def schouten_normal_derivative(jet, u_abn, alpha, beta):
    """hat-A_{alpha beta, n} from the jet and the third derivative u_{alpha beta n}."""
    g, H = jet.grad, jet.hess
    d = 1.0 if alpha == beta else 0.0
    return (u_abn + H[alpha, -1] * g[beta] + H[beta, -1] * g[alpha]
            - d * float(g @ H[:, -1]))


def schouten_normal_derivative_identity(jet, u_abn, bd, alpha, beta, A_hat=None):
    """Residual of hat-A_{ab,n} = 2 mu hat-A_ab - mu_hat e^{-u}(hat-A_ab + hat-A_nn g_ab).

    Zero for an exact jet satisfying the boundary condition along the
    boundary; for differenced data it is pure truncation error.
    """
    _check_tangential(jet, alpha, beta)
    if A_hat is None:
        A_hat = schouten_hat(jet)
    d = 1.0 if alpha == beta else 0.0
    lhs = schouten_normal_derivative(jet, u_abn, alpha, beta)
    rhs = (2.0 * bd.mu * A_hat[alpha, beta]
           - bd.mu_hat * np.exp(-jet.u) * (A_hat[alpha, beta] + A_hat[-1, -1] * d))
    return float(lhs - rhs)


def radial_schouten_eigenvalues(u_r, u_rr, r):
    """Eigenvalues of hat-A for a radial u on flat space.

    Returns (radial, tangential); the tangential one has multiplicity n-1.
    At r = 0 regularity gives u_r = 0 and u_r/r -> u_rr.
    """
    u_r = np.asarray(u_r, dtype=float)
    u_rr = np.asarray(u_rr, dtype=float)
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ParameterError("radius must be non-negative")
    half = 0.5 * u_r * u_r
    lam_rad = u_rr + half
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(r > 0, u_r / np.where(r > 0, r, 1.0), u_rr)
    lam_tan = ratio - half
    if lam_rad.ndim == 0:
        return float(lam_rad), float(lam_tan)
    return lam_rad, lam_tan
