import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st

from sigmak import conformal, symfun
from sigmak.conformal import BoundaryData, PointJet
from sigmak.errors import IdentityPreconditionError, ParameterError
from sigmak.references import Hemisphere
from sigmak.symfun import FunctionalSpec

X = sp.symbols("x1:4", real=True)


def sym_jets(expr, point):
    """Exact value, gradient, Hessian and third derivatives of expr at point."""
    sub = dict(zip(X, point))
    grad = [sp.diff(expr, a) for a in X]
    hess = [[sp.diff(g, b) for b in X] for g in grad]
    third = [[[sp.diff(h, c) for c in X] for h in row] for row in hess]
    ev = lambda e: float(e.evalf(30, subs=sub))
    return (ev(expr), np.array([ev(g) for g in grad]),
            np.array([[ev(h) for h in row] for row in hess]),
            np.array([[[ev(c) for c in h] for h in row] for row in third]))


# -- Schouten tensor ----------------------------------------------------------

def test_schouten_zero_jet():
    jet = PointJet(0.0, np.zeros(3), np.zeros((3, 3)))
    assert np.array_equal(conformal.schouten_hat(jet), np.zeros((3, 3)))


def test_schouten_constant_keeps_background():
    B = np.array([[1.0, 0.2, 0], [0.2, 2.0, 0], [0, 0, 3.0]])
    jet = PointJet(4.2, np.zeros(3), np.zeros((3, 3)))
    assert np.allclose(conformal.schouten_hat(jet, B), B)


def test_schouten_gradient_only():
    jet = PointJet(0.0, np.array([1.0, 0, 0]), np.zeros((3, 3)))
    assert np.allclose(conformal.schouten_hat(jet), np.diag([0.5, -0.5, -0.5]))


def test_schouten_batched_matches_pointwise(rng):
    g = rng.normal(size=(5, 4))
    H = rng.normal(size=(5, 4, 4))
    H = H + np.swapaxes(H, 1, 2)
    A = conformal.schouten_from_derivatives(g, H)
    for i in range(5):
        assert np.allclose(A[i], conformal.schouten_hat(PointJet(0.0, g[i], H[i])))


def test_jet_validation():
    with pytest.raises(ParameterError):
        PointJet(0.0, np.zeros(3), np.zeros((2, 2)))
    with pytest.raises(ParameterError):
        PointJet(0.0, np.zeros(2), np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_hemisphere_symbolic_identity():
    # hat-A[u*] - e^{-2u*} I vanishes identically
    r2 = sum(x**2 for x in X)
    u = sp.log((1 + r2) / sp.sqrt(2))
    grad = sp.Matrix([sp.diff(u, a) for a in X])
    H = sp.hessian(u, X)
    A = H + grad * grad.T - sp.Rational(1, 2) * (grad.T * grad)[0] * sp.eye(3)
    assert sp.simplify(A - sp.exp(-2 * u) * sp.eye(3)) == sp.zeros(3, 3)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_hemisphere_pointwise_at_random_radii(k):
    """S(hat-A[u*]) = e^{-2u*} at 20 random radii, exact derivatives from sympy."""
    r = sp.symbols("r", positive=True)
    u = sp.log((1 + r**2) / sp.sqrt(2))
    ur, urr = sp.diff(u, r), sp.diff(u, r, 2)
    rng = np.random.default_rng(11)
    spec = FunctionalSpec(3, k, 1.0)
    for rv in rng.uniform(0.0, 3.0, size=20):
        ev = lambda e: float(e.subs(r, rv).evalf(30))
        lam = conformal.radial_schouten_eigenvalues(ev(ur), ev(urr), rv)
        F = symfun.F_value(spec, [lam[0], lam[1], lam[1]])
        assert abs(F - np.exp(-2 * ev(u))) <= 1e-12
        # Cartesian route through the reference jets
        x = rv * np.array([0.6, 0.0, 0.8])
        _, g, Hx = Hemisphere().jet(x)
        F2, _ = symfun.F_matrix(spec, conformal.schouten_from_derivatives(g, Hx))
        assert abs(F2 - np.exp(-2 * ev(u))) <= 1e-12


# -- radial eigenvalues -------------------------------------------------------

def test_radial_constant():
    assert conformal.radial_schouten_eigenvalues(0.0, 0.0, 0.7) == (0.0, 0.0)


@given(st.floats(0.0, 5.0))
def test_radial_half_r_squared(r):
    rad, tan = conformal.radial_schouten_eigenvalues(r, 1.0, r)
    assert rad == pytest.approx(1 + r * r / 2)
    assert tan == pytest.approx(1 - r * r / 2)


def test_radial_matches_cartesian(rng):
    u = Hemisphere()
    for rv in rng.uniform(0.05, 2.0, size=10):
        _, ur, urr = u.radial_jet(rv)
        rad, tan = conformal.radial_schouten_eigenvalues(ur, urr, rv)
        _, g, H = u.jet(np.array([rv, 0.0, 0.0]))
        ev = np.sort(np.linalg.eigvalsh(conformal.schouten_from_derivatives(g, H)))
        assert np.allclose(ev, np.sort([rad, tan, tan]))


def test_radial_origin_limit():
    _, ur, urr = Hemisphere().radial_jet(np.array([0.0]))
    rad, tan = conformal.radial_schouten_eigenvalues(ur, urr, np.array([0.0]))
    assert rad[0] == pytest.approx(2.0) and tan[0] == pytest.approx(2.0)


def test_radial_negative_radius():
    with pytest.raises(ParameterError):
        conformal.radial_schouten_eigenvalues(0.0, 0.0, -1.0)


# -- boundary transformation laws ----------------------------------------------

def test_mean_curvature_examples():
    assert conformal.mean_curvature_transform(0.0, 0.0, 1.0) == pytest.approx(1.0)
    assert conformal.mean_curvature_transform(0.7, 0.0, 2.0) == pytest.approx(np.exp(0.7) * 2)
    assert conformal.mean_curvature_transform(0.3, -1.5, 1.5) == 0.0


def test_boundary_data_case():
    assert BoundaryData(1.0, 0.0).case == "a"
    assert BoundaryData(0.0, 2.0).case == "b"
    assert not BoundaryData(0.0, -1.0).within_hypotheses


def test_mixed_second_trivial():
    jet = PointJet(0.2, np.array([0.4, -0.3, 0.0]), np.eye(3))
    assert conformal.tangential_normal_mixed_second(jet, BoundaryData(), 0) == 0.0
    jet = PointJet(0.2, np.array([0.0, -0.3, -1.0]), np.eye(3))
    assert conformal.tangential_normal_mixed_second(jet, BoundaryData(1.0, 0.0), 0) == 0.0


def test_precondition_error():
    jet = PointJet(0.0, np.array([0.1, 0.1, 0.5]), np.eye(3))
    with pytest.raises(IdentityPreconditionError):
        conformal.tangential_normal_mixed_second(jet, BoundaryData(0.0, 0.0), 0)
    with pytest.raises(IdentityPreconditionError):
        conformal.tangential_hessian_normal_derivative(jet, BoundaryData(0.0, 0.0), 0, 1)


def test_tangential_index_range():
    jet = PointJet(0.0, np.zeros(3), np.eye(3))
    with pytest.raises(ParameterError):
        conformal.tangential_normal_mixed_second(jet, BoundaryData(), 2)


def test_third_derivative_flat_zero():
    jet = PointJet(0.3, np.array([0.2, 0.1, 0.0]), np.diag([1.0, 2.0, 3.0]))
    assert conformal.tangential_hessian_normal_derivative(jet, BoundaryData(), 0, 1) == 0.0


def test_third_derivative_case_a_specialization():
    mu = 0.8
    H = np.array([[1.0, 0.3, 0.0], [0.3, 2.0, 0.0], [0.0, 0.0, 1.5]])
    jet = PointJet(0.3, np.array([0.0, 0.0, -mu]), H)
    got = conformal.tangential_hessian_normal_derivative(jet, BoundaryData(mu, 0.0), 0, 0)
    assert got == pytest.approx(2 * mu * H[0, 0] - mu * H[2, 2] - mu**3)


def ball_field(R, mu_hat):
    """u = v(R x/|x|) + (R - |x|)(mu_hat e^{-v} - mu): the inner normal derivative on
    |x| = R equals mu_hat e^{-u} - mu with mu = 1/R."""
    r = sp.sqrt(sum(x**2 for x in X))
    y = [R * x / r for x in X]
    v = sp.Rational(3, 10) * y[0] + sp.Rational(1, 5) * y[1] ** 2 + sp.Rational(1, 10) * y[0] * y[2]
    return v + (R - r) * (mu_hat * sp.exp(-v) - 1 / R)


def boundary_frame(omega):
    """Orthonormal frame (e_1, e_2, n) at R omega with n = -omega."""
    a = np.array([1.0, 0.0, 0.0]) if abs(omega[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = a - (a @ omega) * omega
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(omega, e1)
    return np.column_stack([e1, e2, -omega])


@pytest.fixture(scope="module")
def curved_jets():
    out = []
    rng = np.random.default_rng(3)
    for R, mu_hat in [(sp.Integer(1), 0.0), (sp.Integer(2), 1.0), (sp.Rational(1, 2), 0.7)]:
        expr = ball_field(R, sp.nsimplify(mu_hat))
        omega = rng.normal(size=3)
        omega /= np.linalg.norm(omega)
        p = float(R) * omega
        u, g, H, T = sym_jets(expr, [sp.Float(c, 30) for c in p])
        E = boundary_frame(omega)
        jet = PointJet(u, E.T @ g, 0.5 * (E.T @ H @ E + (E.T @ H @ E).T))
        T = np.einsum("abc,ai,bj,ck->ijk", T, E, E, E)
        out.append((jet, BoundaryData(1.0 / float(R), mu_hat), T))
    return out


def test_curved_boundary_condition_holds(curved_jets):
    for jet, bd, _ in curved_jets:
        assert abs(conformal.boundary_residual(jet, bd)) < 1e-12


def test_mixed_second_on_curved_ball(curved_jets):
    for jet, bd, _ in curved_jets:
        for a in range(2):
            want = jet.hess[a, 2]
            assert conformal.tangential_normal_mixed_second(jet, bd, a) == pytest.approx(
                want, abs=1e-10)


def test_third_derivative_on_curved_ball(curved_jets):
    for jet, bd, T in curved_jets:
        for a in range(2):
            for b in range(2):
                got = conformal.tangential_hessian_normal_derivative(jet, bd, a, b)
                assert got == pytest.approx(T[a, b, 2], abs=1e-9)


def test_schouten_identity_on_curved_ball(curved_jets):
    for jet, bd, T in curved_jets:
        for a in range(2):
            for b in range(a, 2):
                r = conformal.schouten_normal_derivative_identity(jet, T[a, b, 2], bd, a, b)
                assert abs(r) < 1e-9


def test_mixed_second_by_differencing():
    # FD oracle: difference u_n along the flat face x_n = 0 of a field satisfying
    # u_n = mu_hat e^{-u} there
    mu_hat = 1.3

    def u(x1, x2, xn):
        v = 0.4 * np.sin(x1) + 0.3 * x2**2
        return v + xn * mu_hat * np.exp(-v) + 0.2 * xn**2

    h = 1e-4
    x = (0.3, -0.2, 0.0)
    un = lambda x1: (u(x1, x[1], h) - u(x1, x[1], -h)) / (2 * h)
    u_1n = (un(x[0] + h) - un(x[0] - h)) / (2 * h)
    u1 = (u(x[0] + h, x[1], 0) - u(x[0] - h, x[1], 0)) / (2 * h)
    u0 = u(*x)
    jet = PointJet(u0, np.array([u1, 0.6 * x[1], mu_hat * np.exp(-u0)]), np.eye(3))
    pred = conformal.tangential_normal_mixed_second(jet, BoundaryData(0.0, mu_hat), 0)
    assert pred == pytest.approx(u_1n, abs=1e-6)
