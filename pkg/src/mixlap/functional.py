"""Nonlinear right-hand sides f(x, t), their primitives, the energy J and
its gradient, and sampled audits of the growth hypotheses.

The energy of a discrete field u is

    J(u) = 0.5 * u^T (K + alpha S) u - int_Omega F(x, u_h(x)) dx,

with the integral evaluated by a fixed 4-point Gauss rule per element on the
piecewise-linear reconstruction u_h.  The gradient uses the same rule, so it
is the exact derivative of the discrete energy, not merely a consistent
approximation of the continuum one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss

from .assembly import OperatorSystem
from .mesh import FeField, MeshInterval

__all__ = [
    "AffineLinear",
    "PowerPerturbed",
    "Custom",
    "GrowthConstants",
    "HypothesisReport",
    "SlopeEstimate",
    "f_eval",
    "F_eval",
    "fprime_eval",
    "J_eval",
    "J_gradient",
    "load_vector",
    "weighted_mass",
    "check_hypotheses",
    "asymptotic_slopes",
]

_GQ_X, _GQ_W = leggauss(4)
_GQ_X = 0.5 * (_GQ_X + 1.0)  # reference element [0, 1]
_GQ_W = 0.5 * _GQ_W

CONDITIONS = ("f_lg", "i", "ii", "iii", "slopes_infinity", "slopes_zero", "eq_1.8")


@dataclass(frozen=True)
class GrowthConstants:
    """Declared constants for the growth hypotheses (all optional).

    a_bound, b, r: linear / power growth envelope |f| <= a + b |t|^(r-1)
    mu, mu_tilde, R, c, d, A: superquadratic constants (A is the linear slope
        subtracted before the superquadratic comparison)
    lambda_k: spectral level for the quadratic lower bound on F
    """

    a_bound: Optional[float] = None
    b: Optional[float] = None
    r: Optional[float] = None
    mu: Optional[float] = None
    mu_tilde: Optional[float] = None
    R: Optional[float] = None
    c: Optional[float] = None
    d: Optional[float] = None
    A: Optional[float] = None
    lambda_k: Optional[float] = None


@dataclass(frozen=True)
class AffineLinear:
    """f(x, t) = lam * t + a(x); the asymptotically linear model."""

    lam: float
    a: Callable[[np.ndarray], np.ndarray]
    growth: GrowthConstants = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.growth is None:
            object.__setattr__(
                self, "growth", GrowthConstants(b=abs(self.lam), A=self.lam)
            )

    def f(self, x, t):
        return self.lam * np.asarray(t, dtype=float) + self.a(np.asarray(x, dtype=float))

    def F(self, x, t):
        t = np.asarray(t, dtype=float)
        return 0.5 * self.lam * t**2 + self.a(np.asarray(x, dtype=float)) * t

    def fprime(self, x, t):
        return np.broadcast_to(self.lam, np.broadcast(np.asarray(x), np.asarray(t)).shape).copy()


def _power_growth_defaults(lam: float, p: float) -> GrowthConstants:
    # F = lam t^2/2 + |t|^p / p >= c |t|^p - d with the largest clean c:
    # for lam >= 0 take c = 1/p, d = 0; otherwise c = 1/(2p) and d the
    # maximum of |lam| t^2/2 - |t|^p/(2p), attained at t = (p|lam|)^(1/(p-2)).
    if lam >= 0:
        c, d = 1.0 / p, 0.0
    else:
        c = 1.0 / (2.0 * p)
        t_star = (2.0 * abs(lam)) ** (1.0 / (p - 2.0))
        d = max(0.0, abs(lam) * t_star**2 / 2.0 - t_star**p / (2.0 * p))
    return GrowthConstants(
        a_bound=abs(lam), b=abs(lam) + 1.0, r=p, mu=p, mu_tilde=p, R=1.0, c=c, d=d, A=lam
    )


@dataclass(frozen=True)
class PowerPerturbed:
    """f(x, t) = lam * t + |t|^(p-2) t; the superlinear model, p > 2."""

    lam: float
    p: float
    growth: GrowthConstants = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if not self.p > 2.0:
            raise ValueError(f"power exponent must satisfy p > 2, got p={self.p}")
        if self.growth is None:
            object.__setattr__(self, "growth", _power_growth_defaults(self.lam, self.p))

    def f(self, x, t):
        t = np.asarray(t, dtype=float)
        return self.lam * t + np.abs(t) ** (self.p - 2.0) * t

    def F(self, x, t):
        t = np.asarray(t, dtype=float)
        return 0.5 * self.lam * t**2 + np.abs(t) ** self.p / self.p

    def fprime(self, x, t):
        t = np.asarray(t, dtype=float)
        return self.lam + (self.p - 1.0) * np.abs(t) ** (self.p - 2.0)


@dataclass(frozen=True)
class Custom:
    """User-supplied pair (f, F); F' = f is spot-checked at construction."""

    f_fn: Callable
    F_fn: Callable
    fprime_fn: Optional[Callable] = None
    growth: GrowthConstants = field(default_factory=GrowthConstants)

    def __post_init__(self):
        ts = np.array([-2.7, -1.0, -0.3, 0.4, 1.1, 3.2])
        xs = np.full_like(ts, 0.37)
        eps = 1e-6
        fd = (self.F_fn(xs, ts + eps) - self.F_fn(xs, ts - eps)) / (2 * eps)
        fv = self.f_fn(xs, ts)
        scale = np.maximum(1.0, np.abs(fv))
        if np.max(np.abs(fd - fv) / scale) > 1e-4:
            raise ValueError("custom primitive check failed: F' does not match f on a sample grid")

    def f(self, x, t):
        return np.asarray(self.f_fn(x, t), dtype=float)

    def F(self, x, t):
        return np.asarray(self.F_fn(x, t), dtype=float)

    def fprime(self, x, t):
        if self.fprime_fn is not None:
            return np.asarray(self.fprime_fn(x, t), dtype=float)
        eps = 1e-6
        return (self.f(x, np.asarray(t) + eps) - self.f(x, np.asarray(t) - eps)) / (2 * eps)


Nonlinearity = AffineLinear | PowerPerturbed | Custom


def f_eval(nl, x, t):
    return nl.f(x, t)


def F_eval(nl, x, t):
    return nl.F(x, t)


def fprime_eval(nl, x, t):
    return nl.fprime(x, t)


@lru_cache(maxsize=32)
def _quad_points(mesh: MeshInterval) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gauss points per element, their weights, and the two shape values."""
    lefts = mesh.a + mesh.h * np.arange(mesh.n_elem)
    xq = lefts[:, None] + mesh.h * _GQ_X[None, :]  # (n_elem, 4)
    wq = mesh.h * _GQ_W  # (4,)
    shapes = np.stack([1.0 - _GQ_X, _GQ_X])  # (2, 4)
    xq.flags.writeable = False
    wq.flags.writeable = False
    shapes.flags.writeable = False
    return xq, wq, shapes


def _field_at_quad(u: FeField) -> np.ndarray:
    nodal = u.padded()
    _, _, shapes = _quad_points(u.mesh)
    left = nodal[:-1]
    right = nodal[1:]
    return left[:, None] * shapes[0][None, :] + right[:, None] * shapes[1][None, :]


def J_eval(sys: OperatorSystem, nl, u: FeField) -> float:
    """Energy 0.5 B(u, u) - int F(x, u_h)."""
    if u.mesh != sys.mesh:
        raise ValueError("field mesh does not match the assembled system")
    xq, wq, _ = _quad_points(sys.mesh)
    uq = _field_at_quad(u)
    Fq = nl.F(xq, uq)
    if not np.all(np.isfinite(Fq)):
        raise FloatingPointError("non-finite primitive value at a quadrature point")
    quadratic = 0.5 * float(u.coeffs @ (sys.A @ u.coeffs))
    return quadratic - float(np.sum(Fq * wq[None, :]))


def _scatter_quad(mesh: MeshInterval, vals: np.ndarray) -> np.ndarray:
    """Assemble sum_q w_q vals(x_q) phi_i(x_q) into interior-node entries."""
    _, wq, shapes = _quad_points(mesh)
    per_left = np.sum(vals * (wq[None, :] * shapes[0][None, :]), axis=1)
    per_right = np.sum(vals * (wq[None, :] * shapes[1][None, :]), axis=1)
    full = np.zeros(mesh.n_elem + 1)
    full[:-1] += per_left
    full[1:] += per_right
    return full[1:-1]


def J_gradient(sys: OperatorSystem, nl, u: FeField) -> FeField:
    """Exact gradient of the discrete energy: (K + alpha S) u - quad(f phi)."""
    if u.mesh != sys.mesh:
        raise ValueError("field mesh does not match the assembled system")
    xq, _, _ = _quad_points(sys.mesh)
    uq = _field_at_quad(u)
    fq = nl.f(xq, uq)
    if not np.all(np.isfinite(fq)):
        raise FloatingPointError("non-finite nonlinearity value at a quadrature point")
    g = sys.A @ u.coeffs - _scatter_quad(sys.mesh, fq)
    return FeField(g, sys.mesh)


def load_vector(mesh: MeshInterval, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Quadrature-consistent load: entries int fn(x) phi_i(x) dx."""
    xq, _, _ = _quad_points(mesh)
    return _scatter_quad(mesh, np.asarray(fn(xq), dtype=float) * np.ones_like(xq))


def weighted_mass(mesh: MeshInterval, weight_at_quad: np.ndarray) -> np.ndarray:
    """Tridiagonal matrix int w(x) phi_i phi_j dx under the shared 4-point rule.

    `weight_at_quad` has shape (n_elem, 4) matching `_quad_points`.
    """
    _, wq, shapes = _quad_points(mesh)
    n = mesh.ndof
    out = np.zeros((n + 2, n + 2))
    w = weight_at_quad * wq[None, :]
    d_ll = np.sum(w * shapes[0] * shapes[0], axis=1)
    d_lr = np.sum(w * shapes[0] * shapes[1], axis=1)
    d_rr = np.sum(w * shapes[1] * shapes[1], axis=1)
    idx = np.arange(mesh.n_elem)
    np.add.at(out, (idx, idx), d_ll)
    np.add.at(out, (idx, idx + 1), d_lr)
    np.add.at(out, (idx + 1, idx), d_lr)
    np.add.at(out, (idx + 1, idx + 1), d_rr)
    return out[1:-1, 1:-1]


def quad_points(mesh: MeshInterval) -> tuple[np.ndarray, np.ndarray]:
    """Public view of the quadrature nodes (n_elem, 4) and weights (4,)."""
    xq, wq, _ = _quad_points(mesh)
    return xq, wq


def field_at_quad(u: FeField) -> np.ndarray:
    return _field_at_quad(u)


# ---------------------------------------------------------------------------
# hypothesis audits
# ---------------------------------------------------------------------------


@dataclass
class HypothesisReport:
    condition: str
    passed: bool
    worst_violation: float
    witness: tuple[float, float]  # (x, t) of the worst violation
    note: str = ""


@dataclass
class SlopeEstimate:
    lower: float
    upper: float
    diverged: bool = False
    inconclusive: bool = False


def _default_grid(t_max: float = 1e6, t_min: float = 1e-6, n: int = 200) -> np.ndarray:
    mags = np.logspace(math.log10(t_min), math.log10(t_max), n)
    return np.concatenate([-mags[::-1], mags])


def _require(growth: GrowthConstants, names: list[str], condition: str) -> list[float]:
    vals = []
    for name in names:
        v = getattr(growth, name)
        if v is None:
            raise ValueError(f"condition {condition!r} needs declared constant {name!r}")
        vals.append(float(v))
    return vals


def _worst(violations: np.ndarray, xs: np.ndarray, ts: np.ndarray):
    flat = int(np.argmax(violations))
    i, j = np.unravel_index(flat, violations.shape)
    return float(violations[i, j]), (float(xs[i]), float(ts[j]))


def asymptotic_slopes(
    nl,
    mode: str,
    grid: Optional[np.ndarray] = None,
    x_samples: Optional[np.ndarray] = None,
    stab_tol: float = 1e-2,
) -> SlopeEstimate:
    """Sampled liminf/limsup of f(x, t) / t for |t| -> infinity or t -> 0.

    Estimates come from the outermost decade of the sample grid; the
    neighbouring decade is used for a stabilization check.  Divergence is
    reported with infinite sentinels and the `diverged` flag rather than a
    large float.
    """
    if mode not in ("at_infinity", "at_zero"):
        raise ValueError(f"mode must be 'at_infinity' or 'at_zero', got {mode!r}")
    if grid is None:
        grid = _default_grid()
    if x_samples is None:
        x_samples = np.linspace(0.05, 0.95, 9)
    mags = np.abs(grid[grid != 0.0])
    lo_m, hi_m = float(np.min(mags)), float(np.max(mags))
    if mode == "at_infinity":
        outer = (hi_m / 10.0, hi_m)
        inner = (hi_m / 100.0, hi_m / 10.0)
    else:
        outer = (lo_m, lo_m * 10.0)
        inner = (lo_m * 10.0, lo_m * 100.0)

    def decade_bounds(band):
        sel = grid[(np.abs(grid) >= band[0]) & (np.abs(grid) <= band[1])]
        ratios = np.array([nl.f(x, sel) / sel for x in x_samples])
        return float(np.min(ratios)), float(np.max(ratios))

    lo_out, hi_out = decade_bounds(outer)
    lo_in, hi_in = decade_bounds(inner)
    mag_out = max(abs(lo_out), abs(hi_out))
    mag_in = max(abs(lo_in), abs(hi_in), 1e-300)
    if mag_out > 2.0 * mag_in and mag_out > 1e3:
        inf = math.inf if hi_out > 0 else -math.inf
        return SlopeEstimate(lower=inf, upper=inf, diverged=True)
    spread = max(abs(lo_out - lo_in), abs(hi_out - hi_in)) / max(1.0, mag_out)
    if spread > stab_tol:
        return SlopeEstimate(lower=lo_out, upper=hi_out, inconclusive=True)
    return SlopeEstimate(lower=lo_out, upper=hi_out)


def check_hypotheses(
    nl,
    grid: Optional[np.ndarray] = None,
    x_samples: Optional[np.ndarray] = None,
    conditions: Optional[list[str]] = None,
    tol: float = 1e-9,
) -> list[HypothesisReport]:
    """Sampled audit of the declared growth inequalities.

    Each report gives the worst violation over the (x, t) grid, measured
    relative to the magnitude of the compared terms (the model cases hit the
    inequalities with equality, where absolute residuals are pure round-off).
    These are falsification checks, not proofs.  Requesting a condition whose
    constants were not declared raises ``ValueError``.
    """
    if grid is None:
        grid = _default_grid()
    if x_samples is None:
        x_samples = np.linspace(0.05, 0.95, 9)
    g = nl.growth
    if conditions is None:
        # audit the conditions matching the declared constants: the linear
        # envelope belongs to the asymptotically linear setting (no r), the
        # power envelope and superquadratic conditions to the superlinear one
        if isinstance(nl, AffineLinear) or (g.r is None and g.b is not None):
            conditions = ["f_lg", "slopes_infinity"]
        else:
            conditions = ["i", "slopes_zero"]
            if all(getattr(g, n) is not None for n in ("a_bound", "b", "r")):
                conditions.append("ii")
            if all(getattr(g, n) is not None for n in ("mu", "mu_tilde", "R", "c", "d", "A")):
                conditions.append("iii")
            if g.lambda_k is not None:
                conditions.append("eq_1.8")
    unknown = set(conditions) - set(CONDITIONS)
    if unknown:
        raise ValueError(f"unknown condition ids: {sorted(unknown)}")
    xs = np.asarray(x_samples, dtype=float)
    ts = np.asarray(grid, dtype=float)
    X = xs[:, None]
    T = ts[None, :]
    fv = nl.f(X, T)
    Fv = nl.F(X, T)
    reports = []

    for cond in conditions:
        if cond == "f_lg":
            (b,) = _require(g, ["b"], cond)
            if g.a_bound is not None:
                env = g.a_bound + b * np.abs(T)
            elif isinstance(nl, AffineLinear):
                # envelope uses the declared a(x) itself, pointwise
                env = np.abs(nl.a(X)) + b * np.abs(T)
            else:
                raise ValueError("condition 'f_lg' needs declared constant 'a_bound'")
            viol = (np.abs(fv) - env) / np.maximum(1.0, np.abs(env))
            worst, wit = _worst(viol, xs, ts)
            reports.append(HypothesisReport(cond, worst <= tol, worst, wit))
        elif cond == "i":
            f0 = np.abs(nl.f(xs, np.zeros_like(xs)))
            i0 = int(np.argmax(f0))
            worst = float(f0[i0])
            reports.append(HypothesisReport(cond, worst <= tol, worst, (float(xs[i0]), 0.0)))
        elif cond == "ii":
            a_b, b, r = _require(g, ["a_bound", "b", "r"], cond)
            env = a_b + b * np.abs(T) ** (r - 1.0)
            viol = (np.abs(fv) - env) / np.maximum(1.0, np.abs(env))
            worst, wit = _worst(viol, xs, ts)
            reports.append(HypothesisReport(cond, worst <= tol, worst, wit))
        elif cond == "iii":
            mu, mu_t, R, c, d, A = _require(g, ["mu", "mu_tilde", "R", "c", "d", "A"], cond)
            core = mu * (Fv - A * T**2 / 2.0)  # must stay strictly positive
            lever = fv * T - A * T**2  # and dominate core
            far = np.abs(T) >= R
            denom = np.maximum(1.0, np.maximum(np.abs(core), np.abs(lever)))
            viol_ar = np.maximum(-core, core - lever) / denom
            viol_ar = np.where(far, viol_ar, -np.inf)
            growth_env = c * np.abs(T) ** mu_t - d
            denom2 = np.maximum(1.0, np.maximum(np.abs(Fv), np.abs(growth_env)))
            viol_growth = (growth_env - Fv) / denom2
            viol = np.maximum(viol_ar, viol_growth)
            worst, wit = _worst(viol, xs, ts)
            reports.append(HypothesisReport(cond, worst <= tol, worst, wit))
        elif cond == "eq_1.8":
            (lam_k,) = _require(g, ["lambda_k"], cond)
            floor = lam_k * T**2 / 2.0
            denom = np.maximum(1.0, np.maximum(np.abs(Fv), np.abs(floor)))
            viol = (floor - Fv) / denom
            worst, wit = _worst(viol, xs, ts)
            reports.append(HypothesisReport(cond, worst <= tol, worst, wit))
        elif cond in ("slopes_infinity", "slopes_zero"):
            mode = "at_infinity" if cond == "slopes_infinity" else "at_zero"
            est = asymptotic_slopes(nl, mode, grid=grid, x_samples=x_samples)
            ok = not (est.diverged or est.inconclusive)
            note = "diverged" if est.diverged else ("inconclusive" if est.inconclusive else "")
            worst = math.inf if est.diverged else (abs(est.upper - est.lower))
            reports.append(HypothesisReport(cond, ok, worst, (float(xs[0]), math.inf if est.diverged else 0.0), note))
    return reports
