import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixlap import FeField, build_mesh, build_system, interpolate
from mixlap.functional import (
    AffineLinear,
    Custom,
    PowerPerturbed,
    F_eval,
    J_eval,
    J_gradient,
    asymptotic_slopes,
    check_hypotheses,
    f_eval,
)
from mixlap.spectrum import solve_pencil


def zero_a(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def test_power_eval_values():
    nl = PowerPerturbed(1.0, 4.0)
    assert f_eval(nl, 0.3, 2.0) == 10.0
    assert F_eval(nl, 0.3, 2.0) == 6.0


def test_affine_at_zero_returns_a():
    nl = AffineLinear(3.0, lambda x: np.cos(x))
    xs = np.linspace(0, 1, 7)
    np.testing.assert_allclose(f_eval(nl, xs, np.zeros_like(xs)), np.cos(xs))


def test_custom_primitive_quadrature():
    nl = Custom(
        f_fn=lambda x, t: np.cos(np.asarray(t, dtype=float)),
        F_fn=lambda x, t: np.sin(np.asarray(t, dtype=float)),
    )
    from scipy.integrate import quad

    for t in (-2.0, -0.5, 0.7, 3.0):
        # numeric primitive of f from 0 to t against the declared F
        approx, _ = quad(np.cos, 0.0, t, epsabs=1e-13, epsrel=1e-13)
        assert abs(F_eval(nl, 0.0, t) - approx) < 1e-10


def test_custom_rejects_wrong_primitive():
    with pytest.raises(ValueError, match="primitive"):
        Custom(f_fn=lambda x, t: np.cos(t), F_fn=lambda x, t: np.asarray(t) * 2.0)


@pytest.mark.parametrize(
    "nl",
    [
        PowerPerturbed(1.0, 4.0),
        PowerPerturbed(-3.0, 2.5),
        AffineLinear(2.0, lambda x: np.sin(x)),
    ],
)
def test_primitive_vanishes_at_zero(nl):
    xs = np.linspace(-1, 1, 11)
    assert np.all(F_eval(nl, xs, np.zeros_like(xs)) == 0.0)


def test_primitive_derivative_matches_f():
    rng = np.random.default_rng(0)
    nl = PowerPerturbed(-2.0, 3.5)
    xs = rng.uniform(0, 1, 1000)
    ts = rng.uniform(-5, 5, 1000)
    eps = 1e-6
    fd = (F_eval(nl, xs, ts + eps) - F_eval(nl, xs, ts - eps)) / (2 * eps)
    fv = f_eval(nl, xs, ts)
    assert np.max(np.abs(fd - fv) / np.maximum(1.0, np.abs(fv))) < 1e-7


def test_energy_zero_field(sys64_neg5):
    assert J_eval(sys64_neg5, PowerPerturbed(1.0, 4.0), FeField.zero(sys64_neg5.mesh)) == 0.0


def test_energy_affine_matches_matrix_arithmetic(sys64_neg5):
    mesh = sys64_neg5.mesh
    lam = 2.5
    a_field = interpolate(lambda x: np.sin(2 * x), mesh)
    nl = AffineLinear(lam, a_field.as_function())
    rng = np.random.default_rng(1)
    u = FeField(rng.standard_normal(mesh.ndof), mesh)
    got = J_eval(sys64_neg5, nl, u)
    quad = 0.5 * float(u.coeffs @ sys64_neg5.A @ u.coeffs)
    mass = 0.5 * lam * float(u.coeffs @ sys64_neg5.M @ u.coeffs)
    pair = float(a_field.coeffs @ sys64_neg5.M @ u.coeffs)
    assert abs(got - (quad - mass - pair)) < 1e-10 * max(1.0, abs(got))


def test_energy_ray_to_minus_infinity(sys64_zero):
    mesh = sys64_zero.mesh
    nl = PowerPerturbed(1.0, 4.0)
    u = interpolate(lambda x: np.sin(np.pi * x), mesh)
    vals = [J_eval(sys64_zero, nl, FeField(t * u.coeffs, mesh)) for t in (1e2, 1e3)]
    assert vals[0] < 0 and vals[1] < vals[0]


def test_gradient_quadratic_case(sys64_neg5):
    mesh = sys64_neg5.mesh
    nl = AffineLinear(0.0, zero_a)
    rng = np.random.default_rng(2)
    u = FeField(rng.standard_normal(mesh.ndof), mesh)
    g = J_gradient(sys64_neg5, nl, u)
    np.testing.assert_allclose(g.coeffs, sys64_neg5.A @ u.coeffs, rtol=1e-12, atol=1e-12)


def test_gradient_finite_difference(sys64_neg5):
    mesh = sys64_neg5.mesh
    rng = np.random.default_rng(3)
    for nl in (PowerPerturbed(2.0, 4.0), AffineLinear(1.5, lambda x: np.cos(3 * x))):
        u = FeField(rng.standard_normal(mesh.ndof), mesh)
        g = J_gradient(sys64_neg5, nl, u).coeffs
        eps = 1e-6
        fd = np.zeros_like(g)
        for i in range(mesh.ndof):
            up, dn = u.coeffs.copy(), u.coeffs.copy()
            up[i] += eps
            dn[i] -= eps
            fd[i] = (
                J_eval(sys64_neg5, nl, FeField(up, mesh))
                - J_eval(sys64_neg5, nl, FeField(dn, mesh))
            ) / (2 * eps)
        assert np.linalg.norm(g - fd) / np.linalg.norm(g) < 1e-6


def test_gradient_vanishes_at_eigenfield(sys64_neg5, spec64_neg5):
    k = 2
    nl = AffineLinear(float(spec64_neg5.lambdas[k - 1]), zero_a)
    u = FeField(spec64_neg5.vectors[:, k - 1], sys64_neg5.mesh)
    g = J_gradient(sys64_neg5, nl, u)
    scale = max(1.0, float(np.max(np.abs(sys64_neg5.A))))
    assert np.max(np.abs(g.coeffs)) < 1e-10 * scale


def test_affine_energy_exactly_quadratic(sys64_neg5):
    mesh = sys64_neg5.mesh
    lam = -1.7
    nl = AffineLinear(lam, lambda x: np.sin(5 * x))
    rng = np.random.default_rng(4)
    u = FeField(rng.standard_normal(mesh.ndof), mesh)
    v = FeField(rng.standard_normal(mesh.ndof), mesh)
    uv = FeField(u.coeffs + v.coeffs, mesh)
    lhs = (
        J_eval(sys64_neg5, nl, uv)
        - J_eval(sys64_neg5, nl, u)
        - float(J_gradient(sys64_neg5, nl, u).coeffs @ v.coeffs)
    )
    rhs = 0.5 * (
        float(v.coeffs @ sys64_neg5.A @ v.coeffs)
        - lam * float(v.coeffs @ sys64_neg5.M @ v.coeffs)
    )
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(rhs))


def test_nonfinite_primitive_rejected(sys64_zero):
    mesh = sys64_zero.mesh
    nl = Custom(
        f_fn=lambda x, t: np.asarray(t, dtype=float),
        F_fn=lambda x, t: np.asarray(t, dtype=float) ** 2 / 2,
    )
    big = FeField(np.full(mesh.ndof, 1e200), mesh)
    with np.errstate(over="ignore"):
        with pytest.raises(FloatingPointError):
            J_eval(sys64_zero, nl, big)


def test_model_hypotheses_pass():
    nl = PowerPerturbed(1.0, 4.0)
    reports = {r.condition: r for r in check_hypotheses(nl)}
    for cond in ("i", "ii", "iii", "slopes_zero"):
        assert reports[cond].passed, cond


def test_affine_growth_passes():
    nl = AffineLinear(3.0, lambda x: 1.0 + np.sin(x) ** 2)
    reports = {r.condition: r for r in check_hypotheses(nl)}
    assert reports["f_lg"].passed
    assert reports["f_lg"].worst_violation <= 0.0
    assert reports["slopes_infinity"].passed


def test_wrong_mu_fails_with_witness():
    base = PowerPerturbed(1.0, 4.0)
    bad = PowerPerturbed(1.0, 4.0, growth=replace(base.growth, mu=8.0))
    rep = check_hypotheses(bad, conditions=["iii"])[0]
    assert not rep.passed
    assert abs(rep.witness[1]) >= bad.growth.R


def test_missing_metadata_raises():
    nl = PowerPerturbed(1.0, 4.0, growth=replace(PowerPerturbed(1.0, 4.0).growth, mu=None))
    with pytest.raises(ValueError, match="mu"):
        check_hypotheses(nl, conditions=["iii"])


def test_slopes_affine_at_infinity():
    nl = AffineLinear(2.5, lambda x: np.cos(x))
    est = asymptotic_slopes(nl, "at_infinity")
    assert not est.diverged and not est.inconclusive
    assert est.lower == pytest.approx(2.5, abs=1e-4)
    assert est.upper == pytest.approx(2.5, abs=1e-4)


def test_slopes_power_at_zero():
    nl = PowerPerturbed(-1.5, 4.0)
    est = asymptotic_slopes(nl, "at_zero")
    assert est.lower == pytest.approx(-1.5, abs=1e-9)
    assert est.upper == pytest.approx(-1.5, abs=1e-9)


def test_slopes_power_diverges_at_infinity():
    est = asymptotic_slopes(PowerPerturbed(1.0, 4.0), "at_infinity")
    assert est.diverged and est.upper == math.inf


@given(t=st.floats(-100, 100), lam=st.floats(-10, 10), p=st.floats(2.1, 6.0))
@settings(max_examples=80, deadline=None)
def test_power_primitive_identity(t, lam, p):
    nl = PowerPerturbed(lam, p)
    want = 0.5 * lam * t * t + abs(t) ** p / p
    assert F_eval(nl, 0.0, t) == pytest.approx(want, rel=1e-12, abs=1e-300)
