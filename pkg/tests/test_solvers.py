import numpy as np
import pytest
from scipy import linalg

from mixlap import FeField, build_mesh, build_system, interpolate
from mixlap.functional import AffineLinear, J_eval, J_gradient, PowerPerturbed
from mixlap.solvers import (
    ProbeConfig,
    ResonanceError,
    SolverConfig,
    coercivity_gap,
    linking_search,
    mountain_pass,
    newton_refine,
    solve_resolvent,
    verify_geometry,
    weak_residual,
)
from mixlap.spectrum import solve_pencil


def zero_a(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def ones_field(mesh):
    return interpolate(lambda x: np.ones_like(x), mesh)


# ---------------------------------------------------------------------------
# resolvent
# ---------------------------------------------------------------------------


def test_resolvent_homogeneous(sys64_neg5):
    rep = solve_resolvent(sys64_neg5, 3.21, FeField.zero(sys64_neg5.mesh))
    assert np.all(rep.u.coeffs == 0.0)
    assert rep.classification == "trivial"


def test_resolvent_poisson_baseline(sys64_zero):
    mesh = sys64_zero.mesh
    rep = solve_resolvent(sys64_zero, 0.0, ones_field(mesh))
    exact = mesh.nodes * (1 - mesh.nodes) / 2
    # right side is the interpolant of 1 (zero at the boundary), so nodal
    # agreement is second order rather than exact
    assert np.max(np.abs(rep.u.coeffs - exact)) < mesh.h**2
    assert rep.weak_residual <= 1e-10


def test_resolvent_matches_dense_oracle(mesh8):
    sys = build_system(mesh8, 0.5, -5.0)
    spec = solve_pencil(sys, 7)
    lam = 0.5 * (spec.lambdas[0] + spec.lambdas[1])
    a = ones_field(mesh8)
    rep = solve_resolvent(sys, lam, a)
    dense = linalg.solve(sys.A - lam * sys.M, sys.M @ a.coeffs)
    assert np.max(np.abs(rep.u.coeffs - dense)) <= 1e-10
    assert rep.weak_residual <= 1e-10


def test_resolvent_resonance_rejected(sys64_neg5):
    lam1 = float(solve_pencil(sys64_neg5, 1).lambdas[0])
    with pytest.raises(ResonanceError, match="k=1"):
        solve_resolvent(sys64_neg5, lam1, ones_field(sys64_neg5.mesh))


def test_resolvent_unique_critical_point(sys64_neg5):
    # for the affine model away from the spectrum, Newton from random starts
    # lands on the resolvent solution (desk-scale uniqueness witness)
    mesh = sys64_neg5.mesh
    spec = solve_pencil(sys64_neg5, 3)
    lam = 0.5 * (spec.lambdas[1] + spec.lambdas[2])
    a = ones_field(mesh)
    target = solve_resolvent(sys64_neg5, lam, a).u.coeffs
    nl = AffineLinear(lam, a.as_function())
    rng = np.random.default_rng(7)
    cfg = SolverConfig(tol=1e-9)
    for _ in range(20):
        u0 = FeField(rng.standard_normal(mesh.ndof), mesh)
        rep = newton_refine(sys64_neg5, nl, u0, cfg)
        assert rep.status == "converged"
        assert np.max(np.abs(rep.u.coeffs - target)) < 1e-7 * max(1.0, np.max(np.abs(target)))


# ---------------------------------------------------------------------------
# weak residual
# ---------------------------------------------------------------------------


def test_weak_residual_matrix_oracle(sys64_neg5):
    mesh = sys64_neg5.mesh
    lam = 4.2
    a = interpolate(lambda x: np.cos(2 * x), mesh)
    nl = AffineLinear(lam, a.as_function())
    rng = np.random.default_rng(5)
    u = FeField(rng.standard_normal(mesh.ndof), mesh)
    got = weak_residual(sys64_neg5, nl, u)
    g = (sys64_neg5.A - lam * sys64_neg5.M) @ u.coeffs - sys64_neg5.M @ a.coeffs
    want = float(np.sqrt(g @ linalg.solve(sys64_neg5.K, g)))
    assert got == pytest.approx(want, rel=1e-10)


def test_weak_residual_deterministic(sys64_neg5):
    mesh = sys64_neg5.mesh
    nl = PowerPerturbed(1.0, 4.0)
    rng = np.random.default_rng(6)
    u = FeField(rng.standard_normal(mesh.ndof), mesh)
    r1 = weak_residual(sys64_neg5, nl, u)
    r2 = weak_residual(sys64_neg5, nl, FeField(u.coeffs + np.zeros(mesh.ndof), mesh))
    assert r1 == r2


# ---------------------------------------------------------------------------
# Newton refinement
# ---------------------------------------------------------------------------


def test_newton_at_eigenfield_is_immediate(sys64_neg5, spec64_neg5):
    k = 2
    nl = AffineLinear(float(spec64_neg5.lambdas[k - 1]), zero_a)
    u0 = FeField(spec64_neg5.vectors[:, k - 1], sys64_neg5.mesh)
    rep = newton_refine(sys64_neg5, nl, u0, SolverConfig())
    assert rep.iterations <= 1
    assert rep.grad_norm <= 1e-12


def test_newton_from_zero_finds_trivial(sys64_zero):
    rep = newton_refine(sys64_zero, PowerPerturbed(2.0, 4.0), FeField.zero(sys64_zero.mesh))
    assert rep.classification == "trivial"
    assert rep.grad_norm <= 1e-12


def test_newton_polishes_mountain_pass_output(sys64_zero):
    lam1 = float(solve_pencil(sys64_zero, 1).lambdas[0])
    nl = PowerPerturbed(lam1 / 2, 4.0)
    mp = mountain_pass(sys64_zero, nl, SolverConfig(tol=1e-8))
    assert mp.converged
    rep = newton_refine(sys64_zero, nl, mp.u, SolverConfig())
    assert rep.grad_norm <= 1e-10
    assert rep.iterations <= 10


# ---------------------------------------------------------------------------
# mountain pass
# ---------------------------------------------------------------------------


def test_mountain_pass_baseline_certified(sys64_zero):
    lam1 = float(solve_pencil(sys64_zero, 1).lambdas[0])
    nl = PowerPerturbed(lam1 / 2, 4.0)
    rep = mountain_pass(sys64_zero, nl, SolverConfig(tol=1e-8))
    assert rep.converged and rep.status == "converged"
    assert rep.classification == "nontrivial"
    assert rep.J_value > 0
    assert rep.grad_norm <= 1e-8
    assert rep.weak_residual <= 1e-7


def test_mountain_pass_geometry_violation(sys64_zero):
    lam1 = float(solve_pencil(sys64_zero, 1).lambdas[0])
    rep = mountain_pass(sys64_zero, PowerPerturbed(1.1 * lam1, 4.0), SolverConfig())
    assert rep.status == "geometry_violation"
    assert not rep.converged


def test_mountain_pass_certificates_agree(sys64_zero):
    lam1 = float(solve_pencil(sys64_zero, 1).lambdas[0])
    rep = mountain_pass(sys64_zero, PowerPerturbed(lam1 / 2, 4.0), SolverConfig(tol=1e-8))
    assert rep.converged
    hi = max(rep.grad_norm, rep.weak_residual)
    lo = max(min(rep.grad_norm, rep.weak_residual), 1e-300)
    assert hi / lo <= 10.0


def test_mountain_pass_path_maximum_decreases(sys64_zero):
    lam1 = float(solve_pencil(sys64_zero, 1).lambdas[0])
    nl = PowerPerturbed(lam1 / 2, 4.0)
    # suppress early Newton so the descent history is populated
    cfg = SolverConfig(tol=1e-8, newton_gate_factor=0.0, max_iter=120)
    rep = mountain_pass(sys64_zero, nl, cfg)
    descent = [j for _, j, _ in rep.path_history]
    assert len(descent) >= 2
    for a, b in zip(descent, descent[1:]):
        assert b <= a + 1e-12


def test_mountain_pass_blowup_guard(sys64_zero):
    lam1 = float(solve_pencil(sys64_zero, 1).lambdas[0])
    nl = PowerPerturbed(lam1 / 2, 4.0)
    cfg = SolverConfig(blowup_bound=1e-9)
    rep = mountain_pass(sys64_zero, nl, cfg)
    assert rep.status == "blowup"
    assert not rep.converged


# ---------------------------------------------------------------------------
# geometry probe and coercivity gap
# ---------------------------------------------------------------------------


def test_geometry_ground_level_power(sys64_zero):
    lam1 = float(solve_pencil(sys64_zero, 1).lambdas[0])
    geo = verify_geometry(sys64_zero, PowerPerturbed(lam1 / 2, 4.0), 0, ProbeConfig(seed=0))
    assert geo.mode == "linking"
    assert geo.alpha_tilde > 0
    assert geo.certified


def test_geometry_quadratic_eigenexpansion(sys64_zero):
    spec = solve_pencil(sys64_zero, 3)
    lam = 0.5 * (spec.lambdas[0] + spec.lambdas[1])
    geo = verify_geometry(sys64_zero, AffineLinear(lam, zero_a), 1, ProbeConfig(seed=0))
    assert geo.mode == "saddle"
    assert geo.certified
    # with zero forcing the infimum over the complement is attained at zero
    assert geo.alpha_tilde == pytest.approx(0.0, abs=1e-12)
    # supremum of the pure quadratic on the X-sphere of radius T in the span
    # of the first eigenfield: T^2/2 * (1 - lam/lambda_1)
    lam1 = spec.lambdas[0]
    want = 0.5 * geo.rho_big**2 * (1.0 - lam / lam1)
    assert geo.boundary_sup == pytest.approx(want, rel=1e-6)
    assert geo.boundary_sup < 0


def test_geometry_violated_slope_above_next_eigenvalue(sys64_zero):
    spec = solve_pencil(sys64_zero, 3)
    lam = 1.5 * spec.lambdas[1]  # above lambda_2: k=1 coercivity gap closes
    geo = verify_geometry(sys64_zero, PowerPerturbed(lam, 4.0), 1, ProbeConfig(seed=0))
    assert not geo.certified
    beta = coercivity_gap(sys64_zero, lam, 1)
    assert beta <= 0


def test_coercivity_gap_positive_below(sys64_zero):
    spec = solve_pencil(sys64_zero, 3)
    for theta in np.linspace(spec.lambdas[0], spec.lambdas[1], 5)[:-1]:
        assert coercivity_gap(sys64_zero, float(theta), 1) > 0


def test_coercivity_gap_closes_at_next_eigenvalue(sys64_zero):
    spec = solve_pencil(sys64_zero, 2)
    beta = coercivity_gap(sys64_zero, float(spec.lambdas[1]), 1)
    assert abs(beta) <= 1e-8


def test_coercivity_gap_accepts_function(sys64_zero):
    spec = solve_pencil(sys64_zero, 2)
    theta_c = 0.5 * (spec.lambdas[0] + spec.lambdas[1])
    const = coercivity_gap(sys64_zero, float(theta_c), 1)
    fn = coercivity_gap(sys64_zero, lambda x: np.full_like(x, theta_c), 1)
    assert fn == pytest.approx(const, rel=1e-12)


def test_coercivity_gap_multistart_oracle(mesh8):
    sys = build_system(mesh8, 0.5, -5.0)
    spec = solve_pencil(sys, 7)
    k = 1
    theta = 0.5 * (spec.lambdas[0] + spec.lambdas[1])
    beta = coercivity_gap(sys, float(theta), k)
    # direct multistart minimization of the quotient over the complement
    from mixlap.functional import weighted_mass, quad_points

    xq, _ = quad_points(mesh8)
    M_th = weighted_mass(mesh8, np.full_like(xq, theta))
    V = solve_pencil(sys, 7).vectors[:, k:]
    Ar = V.T @ (sys.A - M_th) @ V
    Kr = V.T @ sys.K @ V
    from mixlap.oracles import rayleigh_min_oracle

    direct = rayleigh_min_oracle(Ar, Kr, trials=8, seed=0)
    assert beta == pytest.approx(direct, abs=1e-6)


# ---------------------------------------------------------------------------
# linking search
# ---------------------------------------------------------------------------


def test_linking_level_one(sys64_zero):
    spec = solve_pencil(sys64_zero, 2)
    lam = 0.5 * (spec.lambdas[0] + spec.lambdas[1])
    rep = linking_search(sys64_zero, PowerPerturbed(lam, 4.0), 1, SolverConfig(tol=1e-6))
    assert rep.converged
    assert rep.classification == "nontrivial"
    assert rep.grad_norm <= 1e-6
    assert rep.J_value > 0


def test_linking_reduces_to_mountain_pass(sys64_zero):
    lam1 = float(solve_pencil(sys64_zero, 1).lambdas[0])
    nl = PowerPerturbed(lam1 / 2, 4.0)
    mp = mountain_pass(sys64_zero, nl, SolverConfig(tol=1e-8))
    lk = linking_search(sys64_zero, nl, 0, SolverConfig(tol=1e-8))
    assert mp.converged and lk.converged
    assert abs(mp.J_value - lk.J_value) <= 1e-6


def test_linking_geometry_not_certified_reported(sys64_zero):
    spec = solve_pencil(sys64_zero, 3)
    lam = 1.5 * spec.lambdas[1]
    rep = linking_search(sys64_zero, PowerPerturbed(lam, 4.0), 1, SolverConfig())
    assert rep.status == "geometry_violation"
    assert not rep.converged


def test_linking_boundary_nonpositive_when_certified(sys64_zero):
    spec = solve_pencil(sys64_zero, 2)
    lam = 0.5 * (spec.lambdas[0] + spec.lambdas[1])
    geo = verify_geometry(sys64_zero, PowerPerturbed(lam, 4.0), 1, ProbeConfig(seed=0))
    assert geo.certified
    assert geo.boundary_sup <= 0.0
    assert geo.alpha_tilde > 0.0
