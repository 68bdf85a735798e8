import numpy as np
import pytest

from sigmak import solver
from sigmak.conformal import BoundaryData
from sigmak.errors import (ContinuationError, InfeasibleIterateError, NonConvergenceError,
                           ParameterError)
from sigmak.grid import BoxGrid, Field, RadialGrid, gradient, hessian
from sigmak.references import BoxPolynomial, Hemisphere, RadialPolynomial, default_box_reference
from sigmak.solver import ProblemSpec, SolverConfig

HEMI = Hemisphere()


def hemi_radial(N, R=0.5, k=2):
    g = RadialGrid(R, N, 3)
    return ProblemSpec(3, k, g, BoundaryData(), frame=solver.reference_field(HEMI, g),
                       reference=HEMI)


def hemi_box(N, k=2):
    g = BoxGrid(3, N)
    return ProblemSpec(3, k, g, BoundaryData(), frame=solver.reference_field(HEMI, g),
                       reference=HEMI)


def case_b_ball(N):
    ref = RadialPolynomial.matching_boundary(0.3, 0.05, 1.0, 1.0)
    g = RadialGrid(1.0, N, 3)
    return solver.with_manufactured_rhs(ProblemSpec(3, 2, g, BoundaryData(1.0, 1.0), reference=ref))


def box_manufactured(N):
    ref = default_box_reference(3)
    g = BoxGrid(3, N)
    spec = ProblemSpec(3, 2, g, BoundaryData(), frame=solver.reference_field(ref, g),
                       reference=ref)
    return solver.with_manufactured_rhs(spec)


def stacked(R):
    return R.interior.values + R.boundary.values


# -- problem validation ---------------------------------------------------------

def test_box_needs_frame():
    with pytest.raises(ParameterError):
        ProblemSpec(3, 2, BoxGrid(3, 5))


def test_radial_ball_curvature_must_match():
    with pytest.raises(ParameterError):
        ProblemSpec(3, 2, RadialGrid(2.0, 9), BoundaryData(1.0, 1.0))


def test_framed_radial_needs_flat_boundary():
    g = RadialGrid(0.5, 9)
    with pytest.raises(ParameterError):
        ProblemSpec(3, 2, g, BoundaryData(0.0, 1.0), frame=solver.reference_field(HEMI, g))


def test_f_must_be_positive():
    g = RadialGrid(0.5, 9)
    with pytest.raises(ParameterError):
        ProblemSpec(3, 2, g, frame=solver.reference_field(HEMI, g), f=-1.0)


def test_nonsymmetric_background_rejected():
    g = BoxGrid(3, 5)
    with pytest.raises(ParameterError):
        ProblemSpec(3, 2, g, frame=solver.reference_field(HEMI, g), A_g=np.triu(np.ones((3, 3))))


@pytest.mark.parametrize("kw", [dict(t_schedule=(0.0, 0.5)), dict(t_schedule=(0.0, 0.6, 0.5, 1.0)),
                                dict(newton_tol=0.0), dict(linear_solver="lu"),
                                dict(initial_guess="zero"), dict(max_newton_iters=0)])
def test_config_validation(kw):
    with pytest.raises(ParameterError):
        SolverConfig(**kw)


def test_negative_mu_hat_flagged():
    spec = ProblemSpec(3, 2, RadialGrid(1.0, 9), BoundaryData(1.0, -0.5))
    assert spec.flags == [solver.OUTSIDE_HYPOTHESES]
    assert ProblemSpec(3, 2, RadialGrid(1.0, 9), BoundaryData(1.0, 0.5)).flags == []


# -- residual -----------------------------------------------------------------

def test_hemisphere_box_residual_second_order():
    errs, hs = [], []
    for N in (9, 17, 33):
        spec = hemi_box(N)
        R = solver.residual(solver.reference_field(HEMI, spec.grid), 1.0, spec)
        errs.append(np.abs(R.interior.values).max())
        hs.append(spec.grid.hmax)
        assert np.abs(R.boundary.values[spec.grid.framed_mask()]).max() == 0.0
    order = np.log(np.array(errs[:-1]) / errs[1:]) / np.log(2.0)
    assert order.min() >= 1.8


def test_residual_semilinear_at_t0():
    spec = hemi_box(9)
    g = spec.grid
    x = g.coordinates()
    u = Field(g, solver.reference_values(HEMI, g) + 0.05 * np.sin(x[..., 0]) * x[..., 2] ** 2)
    R = solver.residual(u, 0.0, spec)
    grads = np.stack([d.values for d in gradient(u)], axis=-1)
    lap = np.trace(hessian(u), axis1=-2, axis2=-1)
    want = (lap - 0.5 * (3 - 2) * (grads**2).sum(-1)) / 3 - np.exp(-2 * u.values)
    pde = g.interior_mask()
    assert np.allclose(R.interior.values[pde], want[pde], atol=1e-12)


def test_residual_infeasible_raises():
    spec = hemi_radial(33)
    with pytest.raises(InfeasibleIterateError) as ei:
        solver.residual(Field(spec.grid, -solver.reference_values(HEMI, spec.grid)), 1.0, spec)
    assert ei.value.details["min_margin"] < 0


# -- Jacobian -----------------------------------------------------------------

def test_linearize_k1_semilinear():
    # A_g = I keeps u = 0 inside the cone; for k = 1 the Jacobian ignores A_g
    g = BoxGrid(3, 7)
    spec = ProblemSpec(3, 1, g, frame=Field(g, np.zeros(g.shape)), A_g=np.eye(3), f=1.7)
    J = solver.linearize(Field(g, np.zeros(g.shape)), 0.4, spec)
    x = g.coordinates()
    v = np.sin(x[..., 0]) * np.cos(2 * x[..., 1]) + x[..., 2] ** 2
    lap = np.trace(hessian(Field(g, v)), axis1=-2, axis2=-1)
    got = (J @ v.ravel()).reshape(g.shape)
    pde = g.interior_mask()
    assert np.allclose(got[pde], (lap / 3 + 2 * 1.7 * v)[pde], atol=1e-10)


@pytest.mark.parametrize("make,t", [(lambda: hemi_radial(65), 1.0), (lambda: hemi_radial(65), 0.3),
                                    (lambda: case_b_ball(65), 0.7), (lambda: hemi_box(9), 1.0),
                                    (lambda: box_manufactured(9), 0.5)])
def test_linearize_directional_fd(make, t, rng):
    spec = make()
    g = spec.grid
    u = solver.reference_values(spec.reference, g)
    # rough direction scaled so its second differences are O(1)
    v = g.hmax**2 * rng.normal(size=g.shape)
    if g.kind == "radial":
        u = u + 0.01 * np.cos(3 * g.r)
    else:
        u = u + 0.01 * np.sin(g.coordinates()[..., 0])
    J = solver.linearize(u, t, spec)
    r0 = stacked(solver.residual(u, t, spec))
    errs = []
    for eps in (1e-4, 1e-5):
        r1 = stacked(solver.residual(u + eps * v, t, spec))
        errs.append(np.abs((r1 - r0) / eps - (J @ v.ravel()).reshape(g.shape)).max())
    scale = np.abs(J @ v.ravel()).max()
    assert errs[1] < 1e-4 * scale
    assert errs[1] < 0.3 * errs[0]  # O(eps)


def test_linearize_zero_direction():
    spec = hemi_radial(33)
    J = solver.linearize(solver.reference_field(HEMI, spec.grid), 1.0, spec)
    assert np.all(J @ np.zeros(33) == 0)


# -- Newton -------------------------------------------------------------------

def test_newton_t0_from_frame():
    spec = hemi_radial(257)
    u, st = solver.newton_solve(spec.frame, 0.0, spec, SolverConfig())
    assert st.iterations <= 10 and st.residual <= 1e-9
    assert st.min_margin > 0


def test_newton_restart_at_solution():
    spec = hemi_radial(129)
    cfg = SolverConfig()
    u, _ = solver.newton_solve(spec.frame, 1.0, spec, cfg)
    u2, st = solver.newton_solve(u, 1.0, spec, cfg)
    assert st.iterations <= 1
    assert all(s == 1.0 for s in st.steps)


def test_newton_infeasible_start():
    spec = hemi_box(9)
    bad = Field(spec.grid, -solver.reference_values(HEMI, spec.grid))
    with pytest.raises(InfeasibleIterateError):
        solver.newton_solve(bad, 1.0, spec, SolverConfig())


def test_newton_iteration_cap():
    spec = case_b_ball(65)
    u0 = solver.initial_guess(spec, SolverConfig())
    with pytest.raises(NonConvergenceError):
        solver.newton_solve(u0, 0.0, spec, SolverConfig(max_newton_iters=1))


@pytest.mark.parametrize("method", ["direct", "gmres"])
def test_linear_solvers_agree(method):
    spec = case_b_ball(129)
    ref, _ = solver.newton_solve(solver.initial_guess(spec, SolverConfig()), 0.0, spec,
                                 SolverConfig(linear_solver="direct"))
    u, _ = solver.newton_solve(solver.initial_guess(spec, SolverConfig()), 0.0, spec,
                               SolverConfig(linear_solver=method))
    assert np.abs(u.values - ref.values).max() < 1e-8


# -- continuation -------------------------------------------------------------

def test_hemisphere_continuation_second_order():
    errs = []
    for N in (65, 129, 257):
        rep = solver.continuation_solve(hemi_radial(N))
        assert rep.final_t == 1.0 and rep.min_margin > 0
        errs.append(rep.error_vs_reference)
    assert np.all(np.log2(np.array(errs[:-1]) / errs[1:]) >= 1.8)


def test_k1_continuation_is_stationary():
    spec = hemi_radial(65, k=1)
    u0, _ = solver.newton_solve(spec.frame, 0.0, spec, SolverConfig())
    rep = solver.continuation_solve(spec)
    assert np.abs(rep.u.values - u0.values).max() < 1e-12
    assert all(s.iterations == 0 for s in rep.steps[1:])


def test_case_b_ball_feasible_throughout():
    rep = solver.continuation_solve(case_b_ball(257))
    assert rep.final_t == 1.0
    assert all(s.min_margin > 0 for s in rep.steps)
    assert rep.error_vs_reference < 1e-4


def test_unit_hemisphere_chart_is_singular():
    # the dilation mode (1 - r^2)/(1 + r^2) vanishes at r = 1, so the framed
    # problem on the unit chart has a singular linearization
    spec = hemi_radial(33, R=1.0)
    with pytest.raises(ContinuationError) as ei:
        solver.continuation_solve(spec)
    assert ei.value.details["last_good_t"] is None


def test_report_serializes():
    import json
    rep = solver.continuation_solve(hemi_radial(33))
    d = json.loads(json.dumps(rep.to_dict()))
    assert d["final_t"] == 1.0 and len(d["steps"]) == 11
    assert set(d["steps"][0]["monitor"]) == {"sup_grad_sq", "sup_hess", "sup_conf", "ratio",
                                             "min_premise"}


def test_default_guess_without_frame():
    spec = case_b_ball(65)
    u0 = solver.initial_guess(spec, SolverConfig())
    assert np.all(np.isfinite(u0.values))
    solver.residual(u0, 0.0, spec)  # feasible
    with pytest.raises(ParameterError):
        solver.initial_guess(spec, SolverConfig(initial_guess="frame"))


# -- manufacture and monitors ----------------------------------------------------

def test_manufacture_hemisphere_gives_unit_f():
    errs = []
    for N in (17, 33, 65):
        spec = hemi_box(N)
        f, mu_hat = solver.manufacture(solver.reference_field(HEMI, spec.grid), 1.0, spec)
        pde = spec.grid.interior_mask()
        # mu_hat = e^u u_n from a one-sided difference: O(h^2), not exact
        errs.append(max(np.abs(f.values[pde] - 1.0).max(), np.abs(mu_hat).max()))
    assert np.all(np.log2(np.array(errs[:-1]) / errs[1:]) >= 1.8)


def test_manufacture_exact_jets_hemisphere():
    spec = hemi_box(9)
    f, _ = solver.manufacture(None, 1.0, spec, exact=HEMI)
    assert np.allclose(f.values, 1.0, atol=1e-13)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_manufacture_constant_with_identity_background(k):
    g = BoxGrid(3, 5)
    c = 0.4
    spec = ProblemSpec(3, k, g, frame=Field(g, np.full(g.shape, c)), A_g=np.eye(3))
    f, _ = solver.manufacture(Field(g, np.full(g.shape, c)), 1.0, spec)
    assert np.allclose(f.values, np.exp(2 * c))


def test_manufacture_constant_flat_background_infeasible():
    g = BoxGrid(3, 5)
    spec = ProblemSpec(3, 2, g, frame=Field(g, np.zeros(g.shape)))
    with pytest.raises(InfeasibleIterateError):
        solver.manufacture(Field(g, np.zeros(g.shape)), 1.0, spec)


def test_manufacture_case_b_mu_hat():
    ref = RadialPolynomial.matching_boundary(0.3, 0.05, 1.0, 1.0)
    g = RadialGrid(1.0, 65)
    spec = ProblemSpec(3, 2, g, BoundaryData(1.0, 1.0), reference=ref)
    _, mu_hat = solver.manufacture(solver.reference_field(ref, g), 1.0, spec, exact=ref)
    assert mu_hat == pytest.approx(1.0, abs=1e-12)


def test_monitor_zero_field():
    m = solver.estimate_monitor(Field(BoxGrid(3, 5), np.zeros((5, 5, 5))))
    assert (m.sup_grad_sq, m.sup_hess, m.sup_conf, m.ratio) == (0.0, 0.0, 1.0, 0.0)


def test_monitor_hemisphere_stable():
    ratios = []
    for N in (65, 129, 257):
        m = solver.estimate_monitor(solver.reference_field(HEMI, RadialGrid(0.5, N)))
        ratios.append(m.ratio)
        assert np.isfinite(m.ratio) and m.min_premise > 0
    assert (max(ratios) - min(ratios)) / min(ratios) < 0.01


def test_monitor_premise_on_feasible_box_iterate():
    spec = box_manufactured(9)
    m = solver.estimate_monitor(spec.frame, spec.bd)
    assert m.min_premise > 0
