import numpy as np
import pytest

from mixlap import FeField, build_mesh, build_system
from mixlap.analysis import (
    _interp_ratio,
    embedding_constant,
    interpolation_constant,
    young_split_audit,
)
from mixlap.oracles import quotient_max_oracle
from mixlap.spectrum import solve_pencil


def test_embedding_positive_and_achieved(sys64_neg5):
    est = embedding_constant(sys64_neg5)
    assert est.value > 0
    assert est.residual <= 1e-10
    c = est.maximizer.coeffs
    achieved = float(c @ sys64_neg5.S @ c) / float(c @ sys64_neg5.K @ c)
    assert est.value >= achieved - 1e-10


def test_embedding_nondecreasing_under_refinement():
    vals = []
    for n in (32, 64, 128):
        sys = build_system(build_mesh(0, 1, n), 0.5, 0.0)
        vals.append(embedding_constant(sys).value)
    assert vals[0] <= vals[1] <= vals[2]


def test_pencil_definite_above_embedding_threshold(mesh64):
    sys = build_system(mesh64, 0.5, 0.0)
    C = embedding_constant(sys).value
    shifted = sys.with_alpha(-1.0 / C + 1e-6)
    lam1 = solve_pencil(shifted, 1).lambdas[0]
    assert lam1 > 0


def test_embedding_random_audit(sys64_neg5):
    C = embedding_constant(sys64_neg5).value
    rng = np.random.default_rng(0)
    for _ in range(1000):
        u = rng.standard_normal(sys64_neg5.ndof)
        qs = float(u @ sys64_neg5.S @ u)
        qk = float(u @ sys64_neg5.K @ u)
        assert qs <= C * qk * (1 + 1e-10)


def test_interpolation_scale_invariance(sys8_neg5):
    rng = np.random.default_rng(1)
    u = rng.standard_normal(sys8_neg5.ndof)
    r1 = _interp_ratio(sys8_neg5, u)
    r7 = _interp_ratio(sys8_neg5, 7.0 * u)
    assert r7 == pytest.approx(r1, rel=1e-12)


def test_interpolation_eigenfields_within_constant(sys64_neg5, spec64_neg5):
    est = interpolation_constant(sys64_neg5, seed=0)
    for k in range(spec64_neg5.count):
        r = _interp_ratio(sys64_neg5, spec64_neg5.vectors[:, k])
        assert r <= est.value * (1 + 1e-8)


def test_interpolation_matches_sampling_oracle(sys8_neg5):
    est = interpolation_constant(sys8_neg5, seed=0)
    best = quotient_max_oracle(
        lambda c: _interp_ratio(sys8_neg5, c), sys8_neg5.ndof, 100_000, seed=1
    )
    assert best <= est.value * (1 + 1e-8)
    assert est.value - best <= 0.01 * est.value
    assert not est.inconclusive


def test_interpolation_random_audit(sys64_neg5):
    est = interpolation_constant(sys64_neg5, seed=0)
    rng = np.random.default_rng(2)
    for _ in range(1000):
        u = rng.standard_normal(sys64_neg5.ndof)
        assert _interp_ratio(sys64_neg5, u) <= est.value * (1 + 1e-8)


def test_young_split_certifies(sys64_neg5):
    rep = young_split_audit(sys64_neg5, n_random=1000, seed=0)
    assert rep.violations == 0
    assert rep.gamma_split >= rep.gamma_exact * (1 - 1e-10)
    assert rep.certified


def test_young_short_circuit_nonnegative_alpha(mesh64):
    sys = build_system(mesh64, 0.5, 1.5)
    rep = young_split_audit(sys, n_random=10, seed=0)
    assert rep.gamma_split == 0.0 and rep.gamma_exact == 0.0 and rep.violations == 0
