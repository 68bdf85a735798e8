"""Closed-form reference solutions with exact derivatives.

They supply Dirichlet frames, manufactured right-hand sides and the exact
answers the regressions measure errors against.
"""
import numpy as np

from .errors import ParameterError


class Reference:
    radial = False
    name = "reference"

    def __call__(self, x):
        return self.jet(x)[0]

    def jet(self, x):
        """(u, grad, hess) at Cartesian points x of shape (..., n)."""
        raise NotImplementedError

    def radial_jet(self, r):
        raise ParameterError(f"{self.name} is not radially symmetric")

    def params(self):
        return {}

    def to_dict(self):
        return {"name": self.name, **self.params()}


class Hemisphere(Reference):
    """u*(x) = ln((1 + |x|^2) / sqrt 2).

    hat-A[u*] = 2 / (1 + |x|^2)^2 I = e^{-2u*} I, so u* solves F(hat-A) = e^{-2u}
    for every normalized F; it is even in x_n, hence u_n = 0 on x_n = 0.
    """

    radial = True
    name = "hemisphere"

    def radial_jet(self, r):
        r = np.asarray(r, dtype=float)
        q = 1.0 + r * r
        return np.log(q / np.sqrt(2.0)), 2.0 * r / q, 2.0 * (1.0 - r * r) / q**2

    def jet(self, x):
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        q = 1.0 + np.sum(x * x, axis=-1)
        u = np.log(q / np.sqrt(2.0))
        grad = 2.0 * x / q[..., None]
        hess = (2.0 / q)[..., None, None] * np.eye(n) \
            - (4.0 / q**2)[..., None, None] * x[..., :, None] * x[..., None, :]
        return u, grad, hess


class RadialPolynomial(Reference):
    """u = a + b r^2 + c r^4."""

    radial = True
    name = "radial_poly"

    def __init__(self, a, b, c):
        self.a, self.b, self.c = float(a), float(b), float(c)

    @classmethod
    def matching_boundary(cls, b, c, R, mu_hat):
        """Choose a so that u_n + 1/R = mu_hat e^{-u} on the sphere r = R (u_n = -u_r)."""
        ur = 2.0 * b * R + 4.0 * c * R**3
        rhs = 1.0 / R - ur
        if not (mu_hat > 0 and rhs > 0):
            raise ParameterError("no constant a satisfies the boundary condition",
                                 mu_hat=mu_hat, slope=ur)
        uR = -np.log(rhs / mu_hat)
        return cls(uR - b * R**2 - c * R**4, b, c)

    def params(self):
        return {"a": self.a, "b": self.b, "c": self.c}

    def radial_jet(self, r):
        r = np.asarray(r, dtype=float)
        r2 = r * r
        return (self.a + self.b * r2 + self.c * r2 * r2,
                2.0 * self.b * r + 4.0 * self.c * r2 * r,
                2.0 * self.b + 12.0 * self.c * r2)

    def jet(self, x):
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        r2 = np.sum(x * x, axis=-1)
        u = self.a + self.b * r2 + self.c * r2 * r2
        s = 2.0 * self.b + 4.0 * self.c * r2
        grad = s[..., None] * x
        hess = s[..., None, None] * np.eye(n) + 8.0 * self.c * x[..., :, None] * x[..., None, :]
        return u, grad, hess


class BoxPolynomial(Reference):
    """Anisotropic smooth field, even in x_n:

        u = sum_a p_a x_a^2 + q x_1 x_2 + s sin(x_1) + w cos(x_n).

    Evenness gives u_n = 0 on x_n = 0, i.e. the case mu = mu_hat = 0.
    """

    name = "box_poly"

    def __init__(self, p, q=0.05, s=0.05, w=0.1):
        self.p = np.asarray(p, dtype=float)
        self.q, self.s, self.w = float(q), float(s), float(w)

    def params(self):
        return {"p": self.p.tolist(), "q": self.q, "s": self.s, "w": self.w}

    def jet(self, x):
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        if self.p.shape != (n,):
            raise ParameterError("coefficient vector length must equal n", n=n)
        x1, x2, xn = x[..., 0], x[..., 1], x[..., -1]
        u = (np.sum(self.p * x * x, axis=-1) + self.q * x1 * x2
             + self.s * np.sin(x1) + self.w * np.cos(xn))
        grad = 2.0 * self.p * x
        grad[..., 0] += self.q * x2 + self.s * np.cos(x1)
        grad[..., 1] += self.q * x1
        grad[..., -1] += -self.w * np.sin(xn)
        hess = np.zeros(x.shape + (n,))
        hess[..., np.arange(n), np.arange(n)] = 2.0 * self.p
        hess[..., 0, 0] += -self.s * np.sin(x1)
        hess[..., 0, 1] += self.q
        hess[..., 1, 0] += self.q
        hess[..., -1, -1] += -self.w * np.cos(xn)
        return u, grad, hess


def default_box_reference(n=3):
    return BoxPolynomial(p=[0.2] * (n - 1) + [0.3])


def reference_from_dict(d, n=None):
    d = dict(d)
    name = d.pop("name")
    if name == "hemisphere":
        return Hemisphere()
    if name == "radial_poly":
        if "mu_hat" in d:
            return RadialPolynomial.matching_boundary(d["b"], d["c"], d.get("R", 1.0), d["mu_hat"])
        return RadialPolynomial(d["a"], d["b"], d["c"])
    if name == "box_poly":
        if "p" not in d:
            return default_box_reference(n or 3)
        return BoxPolynomial(**d)
    raise ParameterError(f"unknown reference solution {name!r}")
