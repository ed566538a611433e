"""Generalized eigenproblem (K + alpha S) u = lambda M u and its certificates.

The pencil is reduced through the SPD mass matrix (Cholesky inside LAPACK's
sygvd driver), never through the possibly indefinite energy form.  On top of
the solver sit the certified quantities: the recursive variational
characterization of each eigenvalue, the index of the first positive
eigenvalue, the coercivity shift making the form dominate half the local
energy, and the coupling threshold where the bottom eigenvalue crosses zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

from .assembly import OperatorSystem, assemble_gagliardo, assemble_local_stiffness, assemble_mass, build_system
from .mesh import FeField, MeshInterval

__all__ = [
    "Spectrum",
    "ThresholdResult",
    "BoundCheckReport",
    "SpectrumError",
    "DegenerateSpectrumError",
    "solve_pencil",
    "verify_characterization",
    "first_positive_index",
    "bound_checks",
    "garding_constant",
    "alpha_threshold",
]

ZERO_TOL = 1e-10  # |lambda| below this counts as a zero eigenvalue
CLUSTER_TOL = 1e-9


class SpectrumError(RuntimeError):
    pass


class DegenerateSpectrumError(SpectrumError):
    """A zero eigenvalue makes orthogonality against its eigenvector vacuous."""


@dataclass
class Spectrum:
    """Ordered eigenpairs of the pencil; columns of `vectors` are the
    eigenfields, M-orthonormal and mutually B-orthogonal."""

    lambdas: np.ndarray
    vectors: np.ndarray
    n0: Optional[int]
    alpha: float
    s: float
    mesh: MeshInterval

    @property
    def count(self) -> int:
        return self.lambdas.size

    def eigenfield(self, k: int) -> FeField:
        """k-th eigenfield, 1-based."""
        return FeField(self.vectors[:, k - 1], self.mesh)


@dataclass
class ThresholdResult:
    alpha_star: float
    bracket: tuple[float, float]
    lambda1_at_star: float
    iterations: int


@dataclass
class BoundCheckReport:
    k: int
    trials: int
    max_violation_upper: float  # span(u_1..u_k) side
    max_violation_lower: float  # orthogonal-complement side

    @property
    def max_violation(self) -> float:
        return max(self.max_violation_upper, self.max_violation_lower)


def _full_eigh(sys: OperatorSystem) -> tuple[np.ndarray, np.ndarray]:
    if "eigh" not in sys._cache:
        w, v = linalg.eigh(sys.A, sys.M)
        sys._cache["eigh"] = (w, v)
    return sys._cache["eigh"]


def _postprocess_vectors(w: np.ndarray, v: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Deterministic eigenvector representatives.

    Inside each eigenvalue cluster the vectors are re-orthonormalized
    symmetrically in the M inner product, reordered by the index of their
    dominant coefficient, and sign-fixed so the dominant coefficient is
    positive.
    """
    v = v.copy()
    n = w.size
    scale = max(1.0, float(np.max(np.abs(w))))
    start = 0
    while start < n:
        end = start + 1
        while end < n and w[end] - w[end - 1] < CLUSTER_TOL * scale:
            end += 1
        if end - start > 1:
            block = v[:, start:end]
            gram = block.T @ M @ block
            evals, evecs = np.linalg.eigh(gram)
            inv_sqrt = evecs @ np.diag(evals**-0.5) @ evecs.T
            block = block @ inv_sqrt
            order = np.argsort([int(np.argmax(np.abs(block[:, c]))) for c in range(block.shape[1])])
            v[:, start:end] = block[:, order]
        start = end
    for c in range(n):
        lead = int(np.argmax(np.abs(v[:, c])))
        if v[lead, c] < 0:
            v[:, c] = -v[:, c]
    return v


def solve_pencil(sys: OperatorSystem, m: Optional[int] = None, residual_tol: float = 1e-8) -> Spectrum:
    """m algebraically smallest eigenpairs of (K + alpha S, M).

    Raises ``SpectrumError`` when the mass factorization fails or an
    eigenpair residual exceeds ``residual_tol`` relative to the matrix scale.
    """
    n = sys.ndof
    if m is None:
        m = min(n, 12)
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= ndof={n}, got m={m}")
    try:
        linalg.cholesky(sys.M)
    except linalg.LinAlgError as exc:
        raise SpectrumError("mass matrix is not positive definite") from exc
    try:
        w, v = _full_eigh(sys)
    except linalg.LinAlgError as exc:
        raise SpectrumError("generalized eigensolver failed") from exc
    v = _postprocess_vectors(w, v, sys.M)
    w, v = w[:m].copy(), v[:, :m].copy()

    scale = float(np.max(np.abs(sys.A)) + np.max(np.abs(w)) * np.max(np.abs(sys.M)))
    res = sys.A @ v - sys.M @ v * w[None, :]
    worst = float(np.max(np.linalg.norm(res, axis=0)))
    if worst > residual_tol * scale:
        raise SpectrumError(
            f"eigenpair residual {worst:.3e} exceeds {residual_tol:.1e} * scale={scale:.3e}"
        )

    n0: Optional[int] = None
    pos = np.flatnonzero(w > 0.0)
    if pos.size:
        n0 = int(pos[0]) + 1
    return Spectrum(lambdas=w, vectors=v, n0=n0, alpha=sys.alpha, s=sys.s, mesh=sys.mesh)


def first_positive_index(spec: Spectrum) -> int:
    """Smallest 1-based k with lambda_k > 0."""
    pos = np.flatnonzero(spec.lambdas > 0.0)
    if not pos.size:
        raise SpectrumError(
            "all computed eigenvalues are nonpositive; increase m to locate the "
            "first positive eigenvalue"
        )
    return int(pos[0]) + 1


def _feasible_basis(sys: OperatorSystem, vectors: np.ndarray, k: int) -> np.ndarray:
    """Orthonormal basis of the B-orthogonal complement of the first k-1
    eigenfields; rank-deficient constraints signal a zero eigenvalue."""
    n = sys.ndof
    if k == 1:
        return np.eye(n)
    C = sys.A @ vectors[:, : k - 1]  # constraint rows: (A u_j)^T u = 0
    sv = np.linalg.svd(C, compute_uv=False)
    scale = max(1.0, float(np.max(np.abs(sys.A))))
    if np.min(sv) < 1e-12 * scale:
        raise DegenerateSpectrumError(
            "constraint projection is rank deficient: some eigenvalue is zero, so "
            "B-orthogonality against its eigenfield is vacuous"
        )
    q, _ = np.linalg.qr(C, mode="complete")
    return q[:, k - 1 :]


def verify_characterization(
    spec: Spectrum,
    sys: OperatorSystem,
    k: int,
    trials: int = 8,
    seed: int = 0,
    max_iter: int = 200,
) -> float:
    """|min constrained Rayleigh quotient - lambda_k|.

    The minimum of u^T A u / u^T M u over the B-orthogonal complement of the
    first k-1 eigenfields is computed twice: by a projected eigensolve and by
    `trials` runs of constrained descent from random starts.  The smaller of
    the two is compared against the pencil eigenvalue.

    Raises ``DegenerateSpectrumError`` if one of the first k-1 eigenvalues
    vanishes (the recursion is not meaningful past a zero eigenvalue).
    """
    if not 1 <= k <= spec.count:
        raise ValueError(f"k={k} outside the computed range 1..{spec.count}")
    if k > 1 and np.any(np.abs(spec.lambdas[: k - 1]) < ZERO_TOL):
        raise DegenerateSpectrumError(
            f"zero eigenvalue among the first {k - 1}; skipping the recursive "
            "characterization past it"
        )
    Z = _feasible_basis(sys, spec.vectors, k)
    Ar = Z.T @ sys.A @ Z
    Mr = Z.T @ sys.M @ Z
    w = linalg.eigh(Ar, Mr, eigvals_only=True, subset_by_index=[0, 0])
    best = float(w[0])

    rng = np.random.default_rng(seed)
    nr = Ar.shape[0]
    for _ in range(trials):
        c = rng.standard_normal(nr)
        c /= np.sqrt(c @ Mr @ c)
        for _ in range(max_iter):
            rho = c @ Ar @ c
            g = 2.0 * (Ar @ c - rho * (Mr @ c))
            if np.linalg.norm(g) < 1e-13 * max(1.0, abs(rho)):
                break
            basis = np.stack([c, -g]).T
            a2 = basis.T @ Ar @ basis
            m2 = basis.T @ Mr @ basis
            try:
                _, vv = linalg.eigh(a2, m2)
            except linalg.LinAlgError:
                break
            c = basis @ vv[:, 0]
            c /= np.sqrt(c @ Mr @ c)
        best = min(best, float(c @ Ar @ c))
    return abs(best - float(spec.lambdas[k - 1]))


def bound_checks(
    spec: Spectrum, sys: OperatorSystem, k: int, trials: int = 1000, seed: int = 0
) -> BoundCheckReport:
    """Randomized audit of the two-sided Rayleigh bounds.

    For u in the span of the first k eigenfields, B(u,u) <= lambda_k |u|_M^2;
    for u spanned by the remaining computed eigenfields (a subset of the
    B-orthogonal complement), B(u,u) >= lambda_{k+1} |u|_M^2.
    """
    if k + 1 > spec.count:
        raise ValueError(f"need k+1 <= computed count {spec.count}, got k={k}")
    rng = np.random.default_rng(seed)
    U = spec.vectors[:, :k]
    V = spec.vectors[:, k:]
    lam_k = spec.lambdas[k - 1]
    lam_k1 = spec.lambdas[k]
    A, M = sys.A, sys.M

    c_low = rng.standard_normal((trials, k))
    c_high = rng.standard_normal((trials, V.shape[1]))
    up = 0.0
    low = 0.0
    for c in c_low:
        u = U @ c
        qm = u @ M @ u
        up = max(up, float(u @ A @ u - lam_k * qm))
    for c in c_high:
        u = V @ c
        qm = u @ M @ u
        low = max(low, float(lam_k1 * qm - u @ A @ u))
    return BoundCheckReport(k=k, trials=trials, max_violation_upper=up, max_violation_lower=low)


def garding_constant(sys: OperatorSystem) -> float:
    """Smallest gamma >= 0 with B(u,u) + gamma |u|_M^2 >= 0.5 |u|_K^2 for all
    discrete u: gamma = max(0, -lambda_min(K + alpha S - K/2, M))."""
    shifted = sys.A - 0.5 * sys.K
    try:
        w = linalg.eigh(shifted, sys.M, eigvals_only=True, subset_by_index=[0, 0])
    except linalg.LinAlgError as exc:
        raise SpectrumError("eigensolver failed while computing the coercivity shift") from exc
    return max(0.0, -float(w[0]))


def _lambda1(K: np.ndarray, S: np.ndarray, M: np.ndarray, alpha: float) -> float:
    w = linalg.eigh(K + alpha * S, M, eigvals_only=True, subset_by_index=[0, 0])
    return float(w[0])


def alpha_threshold(
    mesh: MeshInterval,
    s: float,
    bracket: tuple[float, float],
    tol: float = 1e-6,
    max_iter: int = 200,
) -> ThresholdResult:
    """Coupling value where the bottom eigenvalue crosses zero.

    lambda_1(alpha) is a minimum of affine functions of alpha with
    nonnegative slopes, hence continuous and nondecreasing; plain bisection
    applies.  The bracket must satisfy lambda_1(lo) < 0 < lambda_1(hi).
    """
    K = assemble_local_stiffness(mesh)
    S = assemble_gagliardo(mesh, s)
    M = assemble_mass(mesh)
    lo, hi = float(bracket[0]), float(bracket[1])
    if lo >= hi:
        raise ValueError(f"invalid bracket: need lo < hi, got {bracket}")
    f_lo = _lambda1(K, S, M, lo)
    f_hi = _lambda1(K, S, M, hi)
    if not (f_lo < 0.0 < f_hi):
        raise ValueError(
            f"bracket does not straddle the crossing: lambda1({lo})={f_lo:.6e}, "
            f"lambda1({hi})={f_hi:.6e}"
        )
    iterations = 0
    mid, f_mid = lo, f_lo
    for iterations in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        f_mid = _lambda1(K, S, M, mid)
        if abs(f_mid) <= tol:
            break
        if f_mid < 0.0:
            lo = mid
        else:
            hi = mid
    else:
        raise SpectrumError(f"bisection did not reach |lambda1| <= {tol} in {max_iter} steps")
    return ThresholdResult(
        alpha_star=mid, bracket=(lo, hi), lambda1_at_star=f_mid, iterations=iterations
    )
