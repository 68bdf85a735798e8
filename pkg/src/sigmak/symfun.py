"""Elementary symmetric functions, Garding cones, Newton tensors and the
normalized sigma_k^{1/k} family with its homotopy deformation F^t.

All array routines broadcast over leading axes: a spectrum is an array whose
last axis has length n, a matrix argument has trailing shape (n, n). Single
points and whole batches (sample sets, grid fields) go through the same code.

No eigendecompositions are used anywhere. sigma_k of a spectrum comes from the
one-pass recurrence e_m <- e_m + lam_i * e_{m-1}; sigma_k of a matrix comes
from the Newton-tensor trace recursion sigma_m = tr(T_{m-1} W) / m.
"""
from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import ConeViolationError, ParameterError, SamplingError


@dataclass(frozen=True)
class FunctionalSpec:
    """The functional F^t built on C(n,k)^{-1/k} sigma_k^{1/k}."""

    n: int
    k: int
    t: float = 1.0

    def __post_init__(self):
        if self.n < 2:
            raise ParameterError(f"n must be >= 2, got {self.n}", n=self.n)
        if not 1 <= self.k <= self.n:
            raise ParameterError(f"k must satisfy 1 <= k <= n, got k={self.k}, n={self.n}",
                                 n=self.n, k=self.k)
        if not 0.0 <= self.t <= 1.0:
            raise ParameterError(f"t must lie in [0, 1], got {self.t}", t=self.t)

    @property
    def norm(self):
        """C(n,k)^{-1/k}, so that F(e) = 1."""
        return comb(self.n, self.k) ** (-1.0 / self.k)

    @property
    def deform_factor(self):
        """(t + n(1-t))^{-1}."""
        return 1.0 / (self.t + self.n * (1.0 - self.t))

    def at(self, t):
        return FunctionalSpec(self.n, self.k, t)


@dataclass(frozen=True)
class ConeMembership:
    """Result of a cone test.

    For a single spectrum ``inside`` is a bool and ``margins`` has shape (k,);
    for a batch both carry the leading batch shape.
    """

    inside: object
    margins: np.ndarray

    @property
    def min_margin(self):
        return np.min(self.margins, axis=-1)


def as_spectrum(lam):
    lam = np.asarray(lam, dtype=float)
    if lam.ndim == 0 or lam.shape[-1] < 2:
        raise ParameterError("a spectrum needs n >= 2 entries", shape=list(lam.shape))
    if not np.all(np.isfinite(lam)):
        raise ParameterError("spectrum entries must be finite")
    return lam


def elem_sym_all(lam):
    """sigma_0..sigma_n of ``lam`` along the last axis, shape (..., n+1)."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    e = np.zeros(lam.shape[:-1] + (n + 1,))
    e[..., 0] = 1.0
    for i in range(n):
        x = lam[..., i]
        # descending m so e[m-1] is still the previous-pass value
        for m in range(i + 1, 0, -1):
            e[..., m] += x * e[..., m - 1]
    return e


def elem_sym_deleted(lam, m):
    """sigma_m(Lambda_i) for every i, where Lambda_i drops entry i. Shape (..., n)."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    out = np.empty(lam.shape)
    if m < 0:
        out[...] = 0.0
        return out
    for i in range(n):
        rest = np.delete(lam, i, axis=-1)
        out[..., i] = elem_sym_all(rest)[..., m] if m <= n - 1 else 0.0
    return out


def in_positive_cone(lam, k, margin=0.0):
    """Test lam in Gamma_k^+ = {sigma_i > margin, 1 <= i <= k}.

    The cone is open, so the default ``margin`` of zero means strict positivity.
    """
    lam = as_spectrum(lam)
    n = lam.shape[-1]
    if not 1 <= k <= n:
        raise ParameterError(f"cone index k={k} out of range for n={n}", n=n, k=k)
    margins = elem_sym_all(lam)[..., 1:k + 1]
    inside = np.all(margins > margin, axis=-1)
    if inside.ndim == 0:
        inside = bool(inside)
    return ConeMembership(inside, margins)


def deform(lam, t):
    """t*lam + (1-t)*sigma_1(lam)*e."""
    lam = np.asarray(lam, dtype=float)
    return t * lam + (1.0 - t) * lam.sum(axis=-1, keepdims=True)


def in_deformed_cone(lam, spec, margin=0.0):
    lam = as_spectrum(lam)
    _check_dim(lam.shape[-1], spec)
    return in_positive_cone(deform(lam, spec.t), spec.k, margin)


def newton_tensors(P, m):
    """Newton tensors T_0..T_m of the symmetric matrix P and sigma_1..sigma_m.

    Returns ``(tensors, sigmas)`` with ``tensors[j] = T_j`` and
    ``sigmas[j] = sigma_j(P)`` (``sigmas[0] = 1``).
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[-1]
    if P.ndim < 2 or P.shape[-2] != n:
        raise ParameterError("matrix argument must have trailing shape (n, n)",
                             shape=list(P.shape))
    if not 0 <= m <= n:
        raise ParameterError(f"Newton tensor index {m} out of range for n={n}", n=n, m=m)
    eye = np.broadcast_to(np.eye(n), P.shape)
    T = eye.copy()
    tensors = [T]
    sigmas = [np.ones(P.shape[:-2])]
    for j in range(1, m + 1):
        TP = T @ P
        s = np.trace(TP, axis1=-2, axis2=-1) / j
        T = s[..., None, None] * eye - TP
        T = 0.5 * (T + np.swapaxes(T, -1, -2))
        tensors.append(T)
        sigmas.append(s)
    return tensors, sigmas


def newton_tensor(P, m):
    """T_m = sigma_m I - sigma_{m-1} P + ... + (-1)^m P^m, via the recursion
    T_m = sigma_m I - T_{m-1} P."""
    return newton_tensors(P, m)[0][m]


def sigma_of_matrix(W, k):
    """sigma_k of the eigenvalues of W without diagonalizing."""
    W = np.asarray(W, dtype=float)
    n = W.shape[-1]
    if k == 0:
        return np.ones(W.shape[:-2]) if W.ndim > 2 else 1.0
    if not 1 <= k <= n:
        raise ParameterError(f"k={k} out of range for n={n}", n=n, k=k)
    sig = newton_tensors(W, k)[1][k]
    return float(sig) if np.ndim(sig) == 0 else sig


def matrix_cone_margins(W, spec):
    """sigma_1..sigma_k of the deformed matrix tW + (1-t) tr(W) I, shape (..., k)."""
    M = deform_matrix(W, spec.t)
    sigmas = newton_tensors(M, spec.k)[1]
    return np.stack(sigmas[1:], axis=-1)


def deform_matrix(W, t):
    W = np.asarray(W, dtype=float)
    n = W.shape[-1]
    tr = np.trace(W, axis1=-2, axis2=-1)
    return t * W + (1.0 - t) * tr[..., None, None] * np.eye(n)


def F_value(spec, lam):
    """F^t(lam) = (t + n(1-t))^{-1} F(t lam + (1-t) sigma_1(lam) e)."""
    lam = as_spectrum(lam)
    _check_dim(lam.shape[-1], spec)
    mu = deform(lam, spec.t)
    sig = elem_sym_all(mu)
    _require_cone(sig[..., 1:spec.k + 1], lam)
    val = spec.deform_factor * spec.norm * sig[..., spec.k] ** (1.0 / spec.k)
    return float(val) if val.ndim == 0 else val


def F_gradient(spec, lam):
    """dF^t/dlam_i, analytic through the deformation chain rule."""
    lam = as_spectrum(lam)
    _check_dim(lam.shape[-1], spec)
    n, k, t = spec.n, spec.k, spec.t
    mu = deform(lam, t)
    sig = elem_sym_all(mu)
    _require_cone(sig[..., 1:k + 1], lam)
    sk = sig[..., k]
    # dS/dmu_i = C^{-1/k} (1/k) sigma_k^{1/k-1} sigma_{k-1}(Lambda_i)
    base = spec.norm / k * sk ** (1.0 / k - 1.0)
    grad_mu = base[..., None] * elem_sym_deleted(mu, k - 1)
    total = grad_mu.sum(axis=-1, keepdims=True)
    return spec.deform_factor * (t * grad_mu + (1.0 - t) * total)


def F_matrix(spec, W):
    """Value of F^t at the spectrum of W and the derivative F^{ij} = dF/dW_ij.

    Entries W_ij and W_ji are treated as independent, so for a symmetric
    perturbation of an off-diagonal pair the directional derivative is
    2 F^{ij}.
    """
    W = np.asarray(W, dtype=float)
    n = W.shape[-1]
    _check_dim(n, spec)
    k, t = spec.k, spec.t
    M = deform_matrix(W, t)
    tensors, sigmas = newton_tensors(M, k)
    margins = np.stack(sigmas[1:], axis=-1)
    _require_cone(margins, None)
    sk = sigmas[k]
    S = spec.norm * sk ** (1.0 / k)
    dS = (spec.norm / k * sk ** (1.0 / k - 1.0))[..., None, None] * tensors[k - 1]
    trace_dS = np.trace(dS, axis1=-2, axis2=-1)
    deriv = spec.deform_factor * (t * dS + (1.0 - t) * trace_dS[..., None, None] * np.eye(n))
    value = spec.deform_factor * S
    if np.ndim(value) == 0:
        value = float(value)
    return value, deriv


def sample_cone(n, k, t, count, seed, max_draw_factor=1000):
    """Seeded samples strictly inside Gamma^t.

    Half the samples have all-positive entries (always inside, since
    Gamma_n^+ is contained in every Gamma^t); the other half are Gaussian draws
    with mean e and unit variance kept only when they land in Gamma^t. The
    Gaussian half is what populates regions where some lam_i <= 0.
    """
    spec = FunctionalSpec(n, k, t)
    rng = np.random.default_rng(seed)
    n_pos = count // 2
    n_gauss = count - n_pos
    pos = rng.exponential(1.0, size=(n_pos, n)) + 1e-12
    gauss = _rejection_gaussian(rng, spec, n_gauss, max_draw_factor)
    out = np.concatenate([pos, gauss], axis=0)
    return out[rng.permutation(count)]


def _rejection_gaussian(rng, spec, count, max_draw_factor, accept=None):
    n = spec.n
    kept = []
    have = 0
    drawn = 0
    budget = max(max_draw_factor * count, 1000)
    batch = max(4 * count, 256)
    while have < count:
        if drawn >= budget:
            raise SamplingError(
                f"rejection budget exhausted after {drawn} draws",
                requested=count, accepted=have, acceptance_rate=have / max(drawn, 1))
        x = rng.normal(1.0, 1.0, size=(batch, n))
        drawn += batch
        ok = in_deformed_cone(x, spec).inside
        if accept is not None:
            ok &= accept(x)
        x = x[ok]
        kept.append(x)
        have += len(x)
    if not kept:
        return np.empty((0, n))
    return np.concatenate(kept, axis=0)[:count]


def _check_dim(n, spec):
    if n != spec.n:
        raise ParameterError(f"argument has dimension {n}, functional expects n={spec.n}",
                             n=n, expected=spec.n)


def _require_cone(margins, lam):
    bad = ~np.all(margins > 0.0, axis=-1)
    if np.any(bad):
        if margins.ndim == 1:
            raise ConeViolationError("argument outside the deformed cone",
                                     margins=margins, point=lam)
        flat = margins.reshape(-1, margins.shape[-1])
        worst = int(np.argmin(flat.min(axis=-1)))
        raise ConeViolationError(
            f"{int(bad.sum())} point(s) outside the deformed cone",
            count=int(bad.sum()), worst_index=worst, margins=flat[worst])
