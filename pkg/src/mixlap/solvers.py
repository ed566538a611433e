"""Certified critical-point searches for the semilinear problem.

Solvers produce a ``CriticalPointReport`` carrying two independent
certificates: the dual norm of the discrete energy gradient and the weak
residual (the same functional re-evaluated through the weak form); a report
claims convergence only when both are below tolerance, the iterate is
nontrivial, and the energy level matches the geometry that produced it.

Search strategies:

* asymptotically linear model: direct resolvent solve with a resonance guard;
* superlinear model, ground level: path deformation (steepest descent of the
  path maximum along a discretized path from zero to a negative-energy
  endpoint), then Newton;
* superlinear model, higher levels: peak-selection minimax over the splitting
  span(u_1..u_k) + ray, with an outer descent on the ray direction, then
  Newton.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import linalg, optimize

from .assembly import OperatorSystem
from .functional import (
    AffineLinear,
    J_eval,
    J_gradient,
    asymptotic_slopes,
    field_at_quad,
    load_vector,
    quad_points,
    weighted_mass,
)
from .mesh import FeField
from .spectrum import DegenerateSpectrumError, Spectrum, solve_pencil

__all__ = [
    "SolverConfig",
    "ProbeConfig",
    "CriticalPointReport",
    "LinkingGeometryReport",
    "ResonanceError",
    "weak_residual",
    "solve_resolvent",
    "newton_refine",
    "mountain_pass",
    "verify_geometry",
    "coercivity_gap",
    "linking_search",
]


class ResonanceError(RuntimeError):
    """The requested linear level sits on (or too close to) an eigenvalue."""


@dataclass
class SolverConfig:
    tol: float = 1e-8
    max_iter: int = 600
    seed: int = 0
    path_nodes: int = 41
    t_max: float = 1e3
    blowup_bound: float = 1e6
    newton_max_iter: int = 40
    newton_tol: float = 1e-12
    newton_gate_factor: float = 0.25  # early-Newton trigger relative to the first gradient
    eig_tol_rel: float = 1e-8  # resonance guard: |lam - lam_k| < eig_tol_rel * (1 + |lam|)
    nontrivial_tol: Optional[float] = None  # default: 1e-4 * geometry radius


@dataclass
class ProbeConfig:
    rho_grid: tuple = tuple(float(x) for x in np.logspace(-3, 0.5, 8))
    restarts: int = 12
    iters: int = 300
    seed: int = 0
    spread_tol: float = 0.5
    rho_big_max: float = 1e4
    samples_per_face: int = 400


@dataclass
class CriticalPointReport:
    u: FeField
    J_value: float
    grad_norm: float
    weak_residual: float
    classification: str  # trivial | nontrivial
    iterations: int
    converged: bool
    status: str
    message: str = ""
    path_history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "J_value": self.J_value,
            "grad_norm": self.grad_norm,
            "weak_residual": self.weak_residual,
            "classification": self.classification,
            "iterations": self.iterations,
            "converged": self.converged,
            "status": self.status,
            "message": self.message,
        }


@dataclass
class LinkingGeometryReport:
    k: int
    rho_small: float
    alpha_tilde: float
    rho_big: float
    boundary_sup: float
    certified: bool
    mode: str  # linking | saddle
    inconclusive: bool = False
    spread: float = 0.0

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "rho_small": self.rho_small,
            "alpha_tilde": self.alpha_tilde,
            "rho_big": self.rho_big,
            "boundary_sup": self.boundary_sup,
            "certified": self.certified,
            "mode": self.mode,
            "inconclusive": self.inconclusive,
            "spread": self.spread,
        }


# ---------------------------------------------------------------------------
# dual norm and residuals
# ---------------------------------------------------------------------------


def _k_band(sys: OperatorSystem) -> np.ndarray:
    if "kband" not in sys._cache:
        n = sys.ndof
        ab = np.zeros((2, n))
        ab[1] = np.diag(sys.K)
        ab[0, 1:] = np.diag(sys.K, 1)
        sys._cache["kband"] = linalg.cholesky_banded(ab)
    return sys._cache["kband"]


def _riesz(sys: OperatorSystem, g: np.ndarray) -> np.ndarray:
    """K^{-1} g: Riesz representative of the functional in the local energy."""
    return linalg.cho_solve_banded((_k_band(sys), False), g)


def _dual_norm(sys: OperatorSystem, g: np.ndarray) -> float:
    return math.sqrt(max(0.0, float(g @ _riesz(sys, g))))


def weak_residual(sys: OperatorSystem, nl, u: FeField) -> float:
    """Dual norm (in the K^{-1} inner product) of phi -> B(u, phi) - int f(x,u) phi."""
    g = J_gradient(sys, nl, u)
    return _dual_norm(sys, g.coeffs)


def _x_norm(sys: OperatorSystem, c: np.ndarray) -> float:
    return math.sqrt(max(0.0, float(c @ sys.K @ c)))


def _classify(sys: OperatorSystem, c: np.ndarray, threshold: float) -> str:
    return "nontrivial" if _x_norm(sys, c) >= threshold else "trivial"


# ---------------------------------------------------------------------------
# linear resolvent
# ---------------------------------------------------------------------------


def solve_resolvent(
    sys: OperatorSystem, lam: float, a: FeField, cfg: SolverConfig | None = None
) -> CriticalPointReport:
    """Direct solve of (K + alpha S - lam M) u = M a with a resonance guard.

    The right-hand side is the piecewise-linear field a; the certificate is
    evaluated against the affine nonlinearity built from its interpolant, so
    the weak residual of the direct solve is at round-off level.
    """
    cfg = cfg or SolverConfig()
    if a.mesh != sys.mesh:
        raise ValueError("field mesh does not match the assembled system")
    eigs = solve_pencil(sys, m=sys.ndof).lambdas
    gaps = np.abs(eigs - lam)
    k_near = int(np.argmin(gaps))
    if gaps[k_near] < cfg.eig_tol_rel * (1.0 + abs(lam)):
        raise ResonanceError(
            f"lambda={lam!r} is within tolerance of eigenvalue k={k_near + 1} "
            f"(lambda_k={eigs[k_near]!r}); the linear problem is resonant"
        )
    Amat = sys.A - lam * sys.M
    rhs = sys.M @ a.coeffs
    lu = linalg.lu_factor(Amat)
    x = linalg.lu_solve(lu, rhs)
    for _ in range(3):  # iterative refinement to push the residual to round-off
        r = rhs - Amat @ x
        if np.max(np.abs(r)) == 0.0:
            break
        x = x + linalg.lu_solve(lu, r)
    u = FeField(x, sys.mesh)
    nl = AffineLinear(lam, a.as_function())
    gn = _dual_norm(sys, J_gradient(sys, nl, u).coeffs)
    wr = weak_residual(sys, nl, u)
    threshold = cfg.nontrivial_tol if cfg.nontrivial_tol is not None else 1e-12
    ok = gn <= max(cfg.tol, 1e-10) and wr <= max(cfg.tol, 1e-10)
    return CriticalPointReport(
        u=u,
        J_value=J_eval(sys, nl, u),
        grad_norm=gn,
        weak_residual=wr,
        classification=_classify(sys, x, threshold),
        iterations=1,
        converged=ok,
        status="converged" if ok else "residual_above_tolerance",
    )


# ---------------------------------------------------------------------------
# Newton refinement
# ---------------------------------------------------------------------------


def _newton_jacobian(sys: OperatorSystem, nl, c: np.ndarray) -> np.ndarray:
    u = FeField(c, sys.mesh)
    xq, _ = quad_points(sys.mesh)
    uq = field_at_quad(u)
    w = np.asarray(nl.fprime(xq, uq), dtype=float)
    w = np.broadcast_to(w, xq.shape)
    return sys.A - weighted_mass(sys.mesh, w)


def newton_refine(
    sys: OperatorSystem, nl, u0: FeField, cfg: SolverConfig | None = None
) -> CriticalPointReport:
    """Damped Newton on J'(u) = 0 with the analytic Jacobian K + alpha S - M_{f'(u)}.

    The merit function is the dual gradient norm; steps fall back to the
    Riesz gradient direction when the Jacobian solve fails.
    """
    cfg = cfg or SolverConfig()
    c = u0.coeffs.copy()
    hist: list[tuple[int, float, float]] = []
    status = "max_iterations"
    it = 0
    g = J_gradient(sys, nl, FeField(c, sys.mesh)).coeffs
    gn = _dual_norm(sys, g)
    for it in range(cfg.newton_max_iter):
        hist.append((it, J_eval(sys, nl, FeField(c, sys.mesh)), gn))
        if gn <= cfg.newton_tol or gn <= 1e-16:
            status = "converged"
            break
        jac = _newton_jacobian(sys, nl, c)
        try:
            delta = np.linalg.solve(jac, -g)
        except np.linalg.LinAlgError:
            delta = -_riesz(sys, g)
        sigma = 1.0
        accepted = False
        while sigma >= 2.0**-24:
            c_try = c + sigma * delta
            g_try = J_gradient(sys, nl, FeField(c_try, sys.mesh)).coeffs
            gn_try = _dual_norm(sys, g_try)
            if gn_try < gn:
                c, g, gn = c_try, g_try, gn_try
                accepted = True
                break
            sigma *= 0.5
        if not accepted:
            status = "diverged"
            break
    else:
        if gn <= cfg.newton_tol:
            status = "converged"
    u = FeField(c, sys.mesh)
    wr = weak_residual(sys, nl, u)
    threshold = cfg.nontrivial_tol if cfg.nontrivial_tol is not None else 1e-6
    converged = status == "converged" and gn <= cfg.tol and wr <= 10.0 * cfg.tol
    return CriticalPointReport(
        u=u,
        J_value=J_eval(sys, nl, u),
        grad_norm=gn,
        weak_residual=wr,
        classification=_classify(sys, c, threshold),
        iterations=it,
        converged=converged,
        status=status,
        path_history=hist,
    )


# ---------------------------------------------------------------------------
# mountain pass
# ---------------------------------------------------------------------------


def _reparameterize(sys: OperatorSystem, path: np.ndarray, n_nodes: int) -> np.ndarray:
    """Resample the polyline to n_nodes equal arclength steps in the K norm."""
    seg = np.array(
        [_x_norm(sys, path[i + 1] - path[i]) for i in range(path.shape[0] - 1)]
    )
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    total = arc[-1]
    if total == 0.0:
        return path.copy()
    targets = np.linspace(0.0, total, n_nodes)
    out = np.empty((n_nodes, path.shape[1]))
    j = 0
    for i, t in enumerate(targets):
        while j < len(seg) - 1 and arc[j + 1] < t:
            j += 1
        denom = max(arc[j + 1] - arc[j], 1e-300)
        w = (t - arc[j]) / denom
        out[i] = (1.0 - w) * path[j] + w * path[j + 1]
    out[0] = path[0]
    out[-1] = path[-1]
    return out


def _geometry_failure(sys: OperatorSystem, message: str) -> CriticalPointReport:
    z = FeField.zero(sys.mesh)
    return CriticalPointReport(
        u=z,
        J_value=0.0,
        grad_norm=math.nan,
        weak_residual=math.nan,
        classification="trivial",
        iterations=0,
        converged=False,
        status="geometry_violation",
        message=message,
    )


def mountain_pass(sys: OperatorSystem, nl, cfg: SolverConfig | None = None) -> CriticalPointReport:
    """Path-deformation search for a positive-level critical point.

    Requires the slope of f at zero to sit strictly below the first pencil
    eigenvalue (checked via a sampled slope estimate); otherwise a geometry
    violation report is returned without searching.  A discrete path from 0
    to a negative-energy endpoint along the first eigenfield is deformed by
    steepest descent of its maximal node (backtracking guarantees the path
    maximum decreases), re-parameterized by arclength each iteration, and the
    final maximal node is Newton-refined.
    """
    cfg = cfg or SolverConfig()
    spec = solve_pencil(sys, m=min(sys.ndof, 2))
    lam1 = float(spec.lambdas[0])
    theta = asymptotic_slopes(nl, "at_zero")
    if theta.diverged or theta.inconclusive:
        return _geometry_failure(sys, "slope estimate at zero is unreliable: " + (
            "diverged" if theta.diverged else "inconclusive"))
    if not theta.upper < lam1:
        return _geometry_failure(
            sys,
            f"slope at zero {theta.upper:.6g} is not below the first eigenvalue "
            f"{lam1:.6g}; ground-level geometry fails",
        )

    u1 = spec.vectors[:, 0]
    u1 = u1 / _x_norm(sys, u1)
    t = 1.0
    endpoint = None
    while t <= cfg.t_max:
        if J_eval(sys, nl, FeField(t * u1, sys.mesh)) < 0.0:
            endpoint = t * u1
            break
        t *= 2.0
    if endpoint is None:
        return _geometry_failure(
            sys, f"no negative-energy endpoint along the first eigenfield up to t={cfg.t_max:g}"
        )

    n_nodes = cfg.path_nodes
    path = np.linspace(0.0, 1.0, n_nodes)[:, None] * endpoint[None, :]
    hist: list[tuple[int, float, float]] = []
    status = "max_iterations"
    message = ""
    sigma0 = 1.0
    m_idx = 0
    threshold = cfg.nontrivial_tol if cfg.nontrivial_tol is not None else 1e-4 * _x_norm(sys, endpoint)

    def certified(rep: CriticalPointReport) -> bool:
        return (
            rep.grad_norm <= cfg.tol
            and rep.weak_residual <= 10.0 * cfg.tol
            and _classify(sys, rep.u.coeffs, threshold) == "nontrivial"
            and rep.J_value > 0.0
        )

    newton_gate = math.inf
    for it in range(cfg.max_iter):
        jvals = np.array([J_eval(sys, nl, FeField(p, sys.mesh)) for p in path])
        m_idx = int(np.argmax(jvals))
        if m_idx in (0, n_nodes - 1):
            status = "geometry_violation"
            message = "path maximum collapsed to an endpoint; minimax level is not positive"
            break
        if max(_x_norm(sys, p) for p in path) > cfg.blowup_bound:
            status = "blowup"
            message = "path iterate exceeded the boundedness guard"
            break
        g = J_gradient(sys, nl, FeField(path[m_idx], sys.mesh)).coeffs
        gd = _riesz(sys, g)
        gn = math.sqrt(max(0.0, float(g @ gd)))
        if newton_gate is math.inf:
            newton_gate = cfg.newton_gate_factor * gn
        if gn <= 10.0 * cfg.tol or gn <= newton_gate:
            # the path maximum looks localized: try to certify it right away
            refined = newton_refine(sys, nl, FeField(path[m_idx], sys.mesh), cfg)
            if certified(refined):
                refined.iterations += len(hist)
                refined.path_history = hist
                refined.converged = True
                refined.status = "converged"
                refined.classification = "nontrivial"
                refined.message = message
                return refined
            newton_gate *= 0.25
            if gn <= 10.0 * cfg.tol:
                status = "stagnation"
                message = "descent converged but Newton refinement did not certify"
                hist.append((it, float(jvals[m_idx]), gn))
                break
        # accept a step only when the re-parameterized path's maximum drops:
        # this makes the recorded minimax level monotone by construction
        sigma = sigma0
        accepted = False
        j_max_old = float(jvals[m_idx])
        while sigma >= 2.0**-30:
            trial = path.copy()
            trial[m_idx] = path[m_idx] - sigma * gd
            trial = _reparameterize(sys, trial, n_nodes)
            j_trial = max(J_eval(sys, nl, FeField(p, sys.mesh)) for p in trial)
            if j_trial < j_max_old - 1e-4 * sigma * gn * gn:
                path = trial
                accepted = True
                break
            sigma *= 0.5
        if not accepted:
            status = "stagnation"
            message = f"descent stalled with gradient norm {gn:.3e}"
            hist.append((it, j_max_old, gn))
            break
        sigma0 = min(1.0, sigma * 4.0)
        hist.append((it, float(j_trial), gn))

    if status in ("geometry_violation", "blowup"):
        rep = _geometry_failure(sys, message)
        rep.status = status
        rep.path_history = hist
        rep.iterations = len(hist)
        return rep

    refined = newton_refine(sys, nl, FeField(path[m_idx], sys.mesh), cfg)
    classification = _classify(sys, refined.u.coeffs, threshold)
    converged = certified(refined)
    return CriticalPointReport(
        u=refined.u,
        J_value=refined.J_value,
        grad_norm=refined.grad_norm,
        weak_residual=refined.weak_residual,
        classification=classification,
        iterations=len(hist) + refined.iterations,
        converged=converged,
        status="converged" if converged else status,
        message=message,
        path_history=hist,
    )


# ---------------------------------------------------------------------------
# linking geometry probe and coercivity gap
# ---------------------------------------------------------------------------


def _sphere_min(
    sys: OperatorSystem,
    nl,
    V: np.ndarray,
    rho: float,
    restarts: int,
    iters: int,
    rng: np.random.Generator,
) -> tuple[float, np.ndarray, float]:
    """Multistart projected descent of J on the X-sphere of radius rho inside
    the span of the columns of V.  Returns (min value, argmin, spread)."""
    nsub = V.shape[1]
    KV = sys.K @ V
    results = []
    best_c = None
    starts = [np.eye(nsub)[j] for j in range(min(nsub, 3))]
    starts += [rng.standard_normal(nsub) for _ in range(restarts)]
    for c in starts:
        c = c.copy()
        for _ in range(iters):
            w = V @ c
            r = _x_norm(sys, w)
            u = (rho / r) * w
            g = J_gradient(sys, nl, FeField(u, sys.mesh)).coeffs
            # chain rule through the radial projection
            gc = (rho / r) * (V.T @ g - (float(w @ g) / r**2) * (KV.T @ w))
            gn = np.linalg.norm(gc)
            val = J_eval(sys, nl, FeField(u, sys.mesh))
            if gn < 1e-12 * max(1.0, abs(val)):
                break
            step = 0.5 / max(1.0, gn)
            improved = False
            while step > 1e-14:
                c_try = c - step * gc
                w_try = V @ c_try
                u_try = (rho / _x_norm(sys, w_try)) * w_try
                if J_eval(sys, nl, FeField(u_try, sys.mesh)) < val - 1e-12:
                    c = c_try
                    improved = True
                    break
                step *= 0.5
            if not improved:
                break
        w = V @ c
        u = (rho / _x_norm(sys, w)) * w
        results.append(float(J_eval(sys, nl, FeField(u, sys.mesh))))
        if results[-1] == min(results):
            best_c = u
    results = sorted(results)
    second = results[1] if len(results) > 1 else results[0]
    spread = (second - results[0]) / (1.0 + abs(results[0]))
    return results[0], best_c, spread


def _delta_boundary_max(
    sys: OperatorSystem,
    nl,
    U: np.ndarray,
    v_dir: np.ndarray,
    rho: float,
    samples: int,
    rng: np.random.Generator,
) -> float:
    """Max of J sampled over the boundary of the half-cylinder
    (X-ball of radius rho in span U) + [0, rho] * v_dir."""
    k = U.shape[1]
    ts = np.linspace(0.0, rho, 33)

    def ball_dirs(count):
        if k == 0:
            return np.zeros((1, 0))
        if k == 1:
            return np.array([[1.0], [-1.0]])
        d = rng.standard_normal((count, k))
        return d / np.linalg.norm(d, axis=1, keepdims=True)

    def x_normalize(w):
        n = _x_norm(sys, w)
        return w / n if n > 0 else w

    best = -math.inf
    # bottom face t = 0, |w| <= rho  (includes the origin)
    for d in ball_dirs(samples // 4):
        w = x_normalize(U @ d) if k else np.zeros(sys.ndof)
        for r in np.linspace(0.0, rho, 17):
            best = max(best, J_eval(sys, nl, FeField(r * w, sys.mesh)))
    # side face |w| = rho, t in [0, rho]
    for d in ball_dirs(samples // 4):
        w = x_normalize(U @ d) if k else None
        if w is None:
            continue
        for t in ts:
            best = max(best, J_eval(sys, nl, FeField(rho * w + t * v_dir, sys.mesh)))
    # top face t = rho, |w| <= rho
    for d in ball_dirs(samples // 4):
        w = x_normalize(U @ d) if k else np.zeros(sys.ndof)
        for r in np.linspace(0.0, rho, 17):
            best = max(best, J_eval(sys, nl, FeField(r * w + rho * v_dir, sys.mesh)))
    if k == 0:
        # boundary reduces to the two segment endpoints
        best = max(
            J_eval(sys, nl, FeField.zero(sys.mesh)),
            J_eval(sys, nl, FeField(rho * v_dir, sys.mesh)),
        )
    return best


def verify_geometry(
    sys: OperatorSystem, nl, k: int, probe: ProbeConfig | None = None
) -> LinkingGeometryReport:
    """Probe the minimax geometry around the spectral splitting at level k.

    Superlinear kinds: estimates the infimum of J on spheres inside the
    complement of the first k eigenfields over a radius grid, and the
    supremum of J on the boundary of the half-cylinder spanned by the first
    k eigenfields and the (k+1)-st direction, growing the cylinder radius
    until the supremum is nonpositive.  Affine kind: the exact infimum over
    the complement (a convex quadratic) against the supremum on the sphere
    in the spanned subspace.  Pure probe: never raises, flags inconclusive
    multistart scatter instead.
    """
    probe = probe or ProbeConfig()
    rng = np.random.default_rng(probe.seed)
    full = solve_pencil(sys, m=sys.ndof)
    if k >= 1 and np.any(np.abs(full.lambdas[:k]) < 1e-10):
        raise DegenerateSpectrumError(
            "a zero eigenvalue among the first k makes the splitting degenerate"
        )
    U = full.vectors[:, :k]
    V = full.vectors[:, k:]
    v_dir = full.vectors[:, k] / _x_norm(sys, full.vectors[:, k])

    if isinstance(nl, AffineLinear):
        lam = nl.lam
        ell = load_vector(sys.mesh, nl.a)
        Ar = V.T @ (sys.A - lam * sys.M) @ V
        rhs = V.T @ ell
        c = np.linalg.solve(Ar, rhs)
        w_min = V @ c
        alpha_tilde = float(J_eval(sys, nl, FeField(w_min, sys.mesh)))
        rho_small = _x_norm(sys, w_min)
        # supremum on the X-sphere of radius T in span(U): grow T until the
        # quadratic drop dominates the linear term
        boundary_sup = math.inf
        T = max(1.0, 2.0 * rho_small)
        while T <= probe.rho_big_max:
            best = -math.inf
            dirs = [np.eye(k)[j] for j in range(k)]
            dirs += [rng.standard_normal(k) for _ in range(probe.restarts)]
            for d in dirs:
                w = U @ d
                w = (T / _x_norm(sys, w)) * w
                for sgn in (1.0, -1.0):
                    best = max(best, float(J_eval(sys, nl, FeField(sgn * w, sys.mesh))))
            boundary_sup = best
            if boundary_sup < alpha_tilde:
                break
            T *= 2.0
        certified = boundary_sup < alpha_tilde
        return LinkingGeometryReport(
            k=k,
            rho_small=rho_small,
            alpha_tilde=alpha_tilde,
            rho_big=T,
            boundary_sup=boundary_sup,
            certified=certified,
            mode="saddle",
        )

    # superlinear: sphere infimum over a radius grid
    best_val = -math.inf
    best_rho = probe.rho_grid[0]
    spread_at_best = 0.0
    for rho in probe.rho_grid:
        val, _, spread = _sphere_min(sys, nl, V, rho, probe.restarts, probe.iters, rng)
        if val > best_val:
            best_val, best_rho, spread_at_best = val, rho, spread
    alpha_tilde = best_val
    rho_small = best_rho

    rho_big = max(1.0, 4.0 * rho_small)
    boundary_sup = math.inf
    while rho_big <= probe.rho_big_max:
        boundary_sup = _delta_boundary_max(sys, nl, U, v_dir, rho_big, probe.samples_per_face, rng)
        if boundary_sup <= 0.0:
            break
        rho_big *= 2.0
    certified = alpha_tilde > 0.0 >= boundary_sup
    return LinkingGeometryReport(
        k=k,
        rho_small=rho_small,
        alpha_tilde=alpha_tilde,
        rho_big=rho_big,
        boundary_sup=boundary_sup,
        certified=certified,
        mode="linking",
        inconclusive=spread_at_best > probe.spread_tol,
        spread=spread_at_best,
    )


def coercivity_gap(sys: OperatorSystem, theta_bar, k: int) -> float:
    """Smallest value of (B(u,u) - int theta u^2) / |u|_X^2 over the
    complement of the first k eigenfields: an eigenvalue of the projected
    pencil against the local stiffness."""
    xq, _ = quad_points(sys.mesh)
    if callable(theta_bar):
        w = np.asarray(theta_bar(xq), dtype=float)
        w = np.broadcast_to(w, xq.shape)
    else:
        w = np.full_like(xq, float(theta_bar))
    M_theta = weighted_mass(sys.mesh, w)
    full = solve_pencil(sys, m=sys.ndof)
    if k >= 1 and np.any(np.abs(full.lambdas[:k]) < 1e-10):
        raise DegenerateSpectrumError(
            "a zero eigenvalue among the first k makes the projection degenerate"
        )
    V = full.vectors[:, k:]
    Ar = V.T @ (sys.A - M_theta) @ V
    Kr = V.T @ sys.K @ V
    wmin = linalg.eigh(Ar, Kr, eigvals_only=True, subset_by_index=[0, 0])
    return float(wmin[0])


# ---------------------------------------------------------------------------
# linking search (peak selection minimax)
# ---------------------------------------------------------------------------


def _peak(
    sys: OperatorSystem, nl, W: np.ndarray, c0: np.ndarray
) -> tuple[np.ndarray, float]:
    """Maximize J over the span of the columns of W (warm start c0)."""

    def neg_val(c):
        return -J_eval(sys, nl, FeField(W @ c, sys.mesh))

    def neg_grad(c):
        return -(W.T @ J_gradient(sys, nl, FeField(W @ c, sys.mesh)).coeffs)

    res = optimize.minimize(neg_val, c0, jac=neg_grad, method="BFGS",
                            options={"gtol": 1e-12, "maxiter": 400})
    c = res.x
    if c[-1] < 0.0:
        c = -c  # keep the ray component nonnegative (J is even for the models)
    return c, float(-res.fun)


def linking_search(
    sys: OperatorSystem, nl, k: int, cfg: SolverConfig | None = None,
    probe: ProbeConfig | None = None,
) -> CriticalPointReport:
    """Minimax search over deformations of the spectral half-cylinder.

    The deformed surface is represented through peak selection: for a ray
    direction v in the complement, the inner stage maximizes J over
    span(u_1..u_k, v); the outer stage descends the ray direction along the
    Riesz gradient of J at the peak.  The converged peak is Newton-refined
    and certified like the ground-level search.  Requires the geometry probe
    to certify the linking (or saddle) structure first.
    """
    cfg = cfg or SolverConfig()
    probe = probe or ProbeConfig(seed=cfg.seed)
    geometry = verify_geometry(sys, nl, k, probe)
    if not geometry.certified:
        rep = _geometry_failure(
            sys,
            f"linking geometry not certified at k={k}: "
            f"alpha_tilde={geometry.alpha_tilde:.6g}, boundary_sup={geometry.boundary_sup:.6g}",
        )
        return rep

    full = solve_pencil(sys, m=sys.ndof)
    U = full.vectors[:, :k]
    M = sys.M
    v = full.vectors[:, k].copy()
    v /= math.sqrt(float(v @ M @ v))

    theta = asymptotic_slopes(nl, "at_zero")
    resonance_note = ""
    if k >= 1 and not theta.diverged and not theta.inconclusive:
        lam_k = float(full.lambdas[k - 1])
        if abs(theta.lower - lam_k) <= 1e-8 * (1.0 + abs(lam_k)):
            resonance_note = (
                f"slope at zero touches eigenvalue k={k} (boundary resonance); "
                "search proceeds but the level may be degenerate"
            )

    def project_out_U(w):
        if k == 0:
            return w
        return w - U @ (U.T @ (M @ w))

    c = np.zeros(k + 1)
    c[-1] = 1.0
    W = np.column_stack([U, v]) if k else v[:, None]
    c, peak_val = _peak(sys, nl, W, c)
    hist: list[tuple[int, float, float]] = []
    status = "max_iterations"
    message = resonance_note
    sigma0 = 1.0
    p_coeffs = W @ c
    for it in range(cfg.max_iter):
        g = J_gradient(sys, nl, FeField(p_coeffs, sys.mesh)).coeffs
        gd = _riesz(sys, g)
        gn = math.sqrt(max(0.0, float(g @ gd)))
        hist.append((it, peak_val, gn))
        if gn <= 10.0 * cfg.tol:
            status = "descent_converged"
            break
        if _x_norm(sys, p_coeffs) > cfg.blowup_bound:
            status = "blowup"
            message = "peak iterate exceeded the boundedness guard"
            break
        sigma = sigma0
        accepted = False
        while sigma >= 2.0**-30:
            v_try = project_out_U(v - sigma * gd)
            nv = math.sqrt(max(float(v_try @ M @ v_try), 0.0))
            if nv <= 0.0:
                sigma *= 0.5
                continue
            v_try /= nv
            W_try = np.column_stack([U, v_try]) if k else v_try[:, None]
            c_warm = c.copy()
            c_try, val_try = _peak(sys, nl, W_try, c_warm)
            if val_try < peak_val - 1e-14:
                v, W, c, peak_val = v_try, W_try, c_try, val_try
                p_coeffs = W @ c
                accepted = True
                break
            sigma *= 0.5
        if not accepted:
            status = "stagnation"
            message = (message + "; " if message else "") + (
                f"outer descent stalled with gradient norm {gn:.3e}"
            )
            break
        sigma0 = min(1.0, sigma * 4.0)

    if status == "blowup":
        rep = _geometry_failure(sys, message)
        rep.status = status
        rep.path_history = hist
        return rep

    refined = newton_refine(sys, nl, FeField(p_coeffs, sys.mesh), cfg)
    threshold = (
        cfg.nontrivial_tol if cfg.nontrivial_tol is not None else 1e-4 * geometry.rho_small
    )
    classification = _classify(sys, refined.u.coeffs, threshold)
    converged = (
        refined.grad_norm <= cfg.tol
        and refined.weak_residual <= 10.0 * cfg.tol
        and classification == "nontrivial"
        and refined.J_value > 0.0
    )
    return CriticalPointReport(
        u=refined.u,
        J_value=refined.J_value,
        grad_norm=refined.grad_norm,
        weak_residual=refined.weak_residual,
        classification=classification,
        iterations=len(hist) + refined.iterations,
        converged=converged,
        status="converged" if converged else (status if status != "descent_converged" else "not_certified"),
        message=message,
        path_history=hist,
    )
