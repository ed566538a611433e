"""P1 assembly of the local, nonlocal and mass bilinear forms on an interval.

The nonlocal form is the Gagliardo double integral over the whole plane for
functions that vanish outside the domain.  It is assembled as the sum of an
interaction part over Omega x Omega and an exterior collar part:

* interaction part: per element-pair tables that depend only on the gap
  between the elements.  Identical and touching pairs are reduced by a
  Duffy-type split to one-dimensional integrals with smooth integrands;
  separated pairs use a fixed tensor Gauss rule (the kernel is analytic
  there).
* exterior part: the inner integral over the complement of the domain has
  the closed form ((x-a)^(-2s) + (b-x)^(-2s)) / (2s); the outer integral of
  that density against a product of hat functions is a sum of elementary
  power integrals, evaluated exactly.

All entries target 1e-8 relative accuracy; a two-order quadrature comparison
guards against silent degradation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.polynomial.legendre import leggauss

from .mesh import FeField, MeshInterval

__all__ = [
    "OperatorSystem",
    "AssemblyToleranceError",
    "assemble_local_stiffness",
    "assemble_mass",
    "assemble_gagliardo",
    "assemble_gagliardo_parts",
    "build_system",
    "bilinear_B",
    "norms",
    "dump_matrix",
    "load_matrix",
]


class AssemblyToleranceError(RuntimeError):
    """Quadrature self-check failed for a matrix entry."""


def _check_s(s: float) -> float:
    s = float(s)
    if not (0.0 < s < 1.0):
        raise ValueError(f"fractional order must satisfy 0 < s < 1, got s={s}")
    return s


def assemble_local_stiffness(mesh: MeshInterval) -> np.ndarray:
    """Exact P1 stiffness matrix (1/h) * tridiag(-1, 2, -1)."""
    n = mesh.ndof
    K = np.zeros((n, n))
    np.fill_diagonal(K, 2.0 / mesh.h)
    off = -1.0 / mesh.h
    K[np.arange(n - 1), np.arange(1, n)] = off
    K[np.arange(1, n), np.arange(n - 1)] = off
    return K


def assemble_mass(mesh: MeshInterval) -> np.ndarray:
    """Exact P1 mass matrix (h/6) * tridiag(1, 4, 1)."""
    n = mesh.ndof
    M = np.zeros((n, n))
    np.fill_diagonal(M, 4.0 * mesh.h / 6.0)
    off = mesh.h / 6.0
    M[np.arange(n - 1), np.arange(1, n)] = off
    M[np.arange(1, n), np.arange(n - 1)] = off
    return M


def _gauss01(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def _collar_moments(s: float, order: int) -> np.ndarray:
    """G(c) = int_0^1 t^c (1+t)^(-1-2s) dt for c = 0, 1, 2 (smooth integrand)."""
    t, w = _gauss01(order)
    base = (1.0 + t) ** (-1.0 - 2.0 * s)
    return np.array([np.sum(w * t**c * base) for c in range(3)])


def _touching_table(s: float, order: int) -> np.ndarray:
    """3x3 node table for a pair of elements sharing one node.

    With xi, eta the scaled distances from the shared node into each element,
    the three node difference functions are (xi, eta - xi, -eta) and every
    product is a quadratic monomial against the kernel (xi + eta)^(-1-2s).
    A Duffy split reduces each monomial integral to
    J(a, b) = (G(a) + G(b)) / (3 - 2s).
    """
    g = _collar_moments(s, order)
    denom = 3.0 - 2.0 * s
    j20 = (g[2] + g[0]) / denom
    j11 = 2.0 * g[1] / denom
    return np.array(
        [
            [j20, j11 - j20, -j11],
            [j11 - j20, 2.0 * (j20 - j11), j11 - j20],
            [-j11, j11 - j20, j20],
        ]
    )


def _separated_tables(
    s: float, gaps: np.ndarray, order: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-gap tables (same-side left, same-side right, cross) on [0,1]^2.

    Kernel (g + v - u)^(-1-2s) is analytic for gaps g >= 2, so a fixed tensor
    Gauss rule converges geometrically.
    """
    u, wu = _gauss01(order)
    v, wv = _gauss01(order)
    kern = (gaps[:, None, None] + v[None, None, :] - u[None, :, None]) ** (-1.0 - 2.0 * s)
    shapes_u = np.stack([1.0 - u, u])  # (2, q)
    shapes_v = np.stack([1.0 - v, v])
    wu_shapes = shapes_u * wu  # weight-folded
    wv_shapes = shapes_v * wv
    cross = np.einsum("ai,bj,gij->gab", wu_shapes, wv_shapes, kern)
    uu = np.einsum("ai,bi,i,gij,j->gab", shapes_u, shapes_u, wu, kern, wv)
    vv = np.einsum("aj,bj,j,gij,i->gab", shapes_v, shapes_v, wv, kern, wu)
    return uu, vv, cross


def _interaction_matrix(mesh: MeshInterval, s: float, order: int) -> np.ndarray:
    """Omega x Omega part of the Gagliardo form on all nodes (incl. boundary)."""
    n_el = mesh.n_elem
    scale = mesh.h ** (1.0 - 2.0 * s)
    full = np.zeros((n_el + 1, n_el + 1))

    # identical pairs: product of differences is (u-v)^2, closed form
    c_same = 2.0 / ((2.0 - 2.0 * s) * (3.0 - 2.0 * s))
    idx = np.arange(n_el)
    for a in (0, 1):
        for b in (0, 1):
            sign = 1.0 if a == b else -1.0
            np.add.at(full, (idx + a, idx + b), sign * c_same * scale)

    # touching pairs (doubled: both orientations contribute equally)
    if n_el >= 2:
        t3 = 2.0 * scale * _touching_table(s, order=48)
        idx = np.arange(n_el - 1)
        for a in range(3):
            for b in range(3):
                np.add.at(full, (idx + a, idx + b), t3[a, b])

    # separated pairs
    if n_el >= 3:
        gaps = np.arange(2, n_el, dtype=float)
        uu, vv, cross = _separated_tables(s, gaps, order)
        for gi, g in enumerate(gaps.astype(int)):
            idx = np.arange(n_el - g)
            for a in (0, 1):
                for b in (0, 1):
                    np.add.at(full, (idx + a, idx + b), 2.0 * scale * uu[gi, a, b])
                    np.add.at(full, (idx + g + a, idx + g + b), 2.0 * scale * vv[gi, a, b])
                    c = -2.0 * scale * cross[gi, a, b]
                    np.add.at(full, (idx + a, idx + g + b), c)
                    np.add.at(full, (idx + g + b, idx + a), c)

    return full[1:-1, 1:-1]


def _power_integral(t0: float, t1: float, expo: float) -> float:
    """int_{t0}^{t1} t^expo dt, 0 <= t0 < t1; caller guarantees integrability."""
    p = expo + 1.0
    if abs(p) < 1e-12:
        return math.log(t1 / t0)
    if t0 == 0.0 and p < 0.0:
        raise AssertionError("divergent power integral reached with nonzero coefficient")
    return (t1**p - t0**p) / p


def _exterior_matrix(mesh: MeshInterval, s: float) -> np.ndarray:
    """Collar part 2 * int phi_i phi_j rho dx with the closed-form density
    rho(x) = ((x-a)^(-2s) + (b-x)^(-2s)) / (2s), integrated exactly.

    On each element the hat-function product is a quadratic polynomial in the
    distance to the relevant endpoint, so the integral is a short sum of
    power integrals.  The polynomial constant term vanishes identically on
    the elements adjacent to the endpoint, which keeps every term finite.
    """
    n_el = mesh.n_elem
    n = mesh.ndof
    h = mesh.h
    ext = np.zeros((n, n))

    def accumulate(local_coeffs, t0, t1):
        # local_coeffs: list of (dof_index, c0, c1) in the distance variable t
        for ii, (i, c0i, c1i) in enumerate(local_coeffs):
            for j, c0j, c1j in local_coeffs[ii:]:
                q = (c0i * c0j, c0i * c1j + c1i * c0j, c1i * c1j)
                val = 0.0
                for m, coef in enumerate(q):
                    if coef != 0.0:
                        val += coef * _power_integral(t0, t1, m - 2.0 * s)
                ext[i - 1, j - 1] += val
                if i != j:
                    ext[j - 1, i - 1] += val

    for k in range(n_el):
        # left-endpoint density, distance t = x - a on [k h, (k+1) h]
        locs = []
        if k >= 1:
            locs.append((k, float(k + 1), -1.0 / h))
        if k + 1 <= n:
            locs.append((k + 1, -float(k), 1.0 / h))
        accumulate(locs, k * h, (k + 1) * h)

        # right-endpoint density, distance sigma = b - x on [(n_el-1-k) h, (n_el-k) h]
        locs = []
        if k >= 1:
            locs.append((k, -float(n_el - k - 1), 1.0 / h))
        if k + 1 <= n:
            locs.append((k + 1, float(n_el - k), -1.0 / h))
        accumulate(locs, (n_el - 1 - k) * h, (n_el - k) * h)

    return ext / s  # 2 * (1 / 2s)


def assemble_gagliardo_parts(
    mesh: MeshInterval, s: float, quad_order: int = 24
) -> tuple[np.ndarray, np.ndarray]:
    """Return (interaction, exterior) parts of the Gagliardo matrix."""
    s = _check_s(s)
    return _interaction_matrix(mesh, s, quad_order), _exterior_matrix(mesh, s)


def assemble_gagliardo(
    mesh: MeshInterval,
    s: float,
    quad_order: int = 24,
    check_tol: float | None = 1e-9,
) -> np.ndarray:
    """Gagliardo form matrix S_ij for hat functions extended by zero.

    Parameters
    ----------
    mesh, s : discretization and fractional order, 0 < s < 1.
    quad_order : tensor Gauss order for separated element pairs.
    check_tol : if not None, re-run the gap tables at a higher order and
        raise ``AssemblyToleranceError`` naming the worst entry when the two
        computations disagree by more than ``check_tol`` relative to the
        matrix scale.
    """
    s = _check_s(s)
    inter = _interaction_matrix(mesh, s, quad_order)
    S = inter + _exterior_matrix(mesh, s)
    if check_tol is not None:
        refined = _interaction_matrix(mesh, s, quad_order + 8)
        diff = np.abs(refined - inter)
        scale = np.max(np.abs(S))
        worst = np.unravel_index(np.argmax(diff), diff.shape)
        if diff[worst] > check_tol * scale:
            raise AssemblyToleranceError(
                f"quadrature did not converge for entry {worst}: "
                f"estimated error {diff[worst]:.3e} exceeds {check_tol:.1e} * scale"
            )
    return S


@dataclass(eq=False)
class OperatorSystem:
    """Assembled forms for the operator -Laplace + alpha * (-Laplace)^s.

    K is the Dirichlet stiffness, S the Gagliardo form, M the mass matrix;
    the energy pairing is B(u, v) = u^T (K + alpha S) v.
    """

    K: np.ndarray
    S: np.ndarray
    M: np.ndarray
    alpha: float
    s: float
    mesh: MeshInterval
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def ndof(self) -> int:
        return self.mesh.ndof

    @property
    def A(self) -> np.ndarray:
        """The form matrix K + alpha * S."""
        if "A" not in self._cache:
            self._cache["A"] = self.K + self.alpha * self.S
        return self._cache["A"]

    def with_alpha(self, alpha: float) -> "OperatorSystem":
        """Same discretization, different coupling constant (S is reused)."""
        return OperatorSystem(
            K=self.K, S=self.S, M=self.M, alpha=float(alpha), s=self.s, mesh=self.mesh
        )


def build_system(
    mesh: MeshInterval, s: float, alpha: float, quad_order: int = 24
) -> OperatorSystem:
    s = _check_s(s)
    return OperatorSystem(
        K=assemble_local_stiffness(mesh),
        S=assemble_gagliardo(mesh, s, quad_order=quad_order),
        M=assemble_mass(mesh),
        alpha=float(alpha),
        s=s,
        mesh=mesh,
    )


def _require_same_mesh(sys: OperatorSystem, *fields: FeField) -> None:
    for f in fields:
        if f.mesh != sys.mesh:
            raise ValueError("field mesh does not match the assembled system")


def bilinear_B(sys: OperatorSystem, u: FeField, v: FeField) -> float:
    """Energy pairing u^T (K + alpha S) v; symmetric in its arguments."""
    _require_same_mesh(sys, u, v)
    return float(u.coeffs @ (sys.A @ v.coeffs))


def norms(u: FeField, sys: OperatorSystem) -> tuple[float, float, float]:
    """Return (||u||_X, ||u||_L2, [u]_s) = sqrt of the K, M, S quadratic forms."""
    _require_same_mesh(sys, u)
    c = u.coeffs
    qk = float(c @ (sys.K @ c))
    qm = float(c @ (sys.M @ c))
    qs = float(c @ (sys.S @ c))
    # round-off guard: the forms are PSD, clamp tiny negatives
    return (math.sqrt(max(qk, 0.0)), math.sqrt(max(qm, 0.0)), math.sqrt(max(qs, 0.0)))


def dump_matrix(path: str | Path, mat: np.ndarray, kind: str) -> None:
    """Plain-text export: header 'rows cols kind', then row-major entries in
    full decimal precision (one row per line)."""
    if kind not in ("dense", "banded"):
        raise ValueError(f"kind must be 'dense' or 'banded', got {kind!r}")
    mat = np.asarray(mat, dtype=float)
    lines = [f"{mat.shape[0]} {mat.shape[1]} {kind}"]
    for row in mat:
        lines.append(" ".join(repr(float(x)) for x in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_matrix(path: str | Path) -> tuple[np.ndarray, str]:
    text = Path(path).read_text().strip().splitlines()
    rows_s, cols_s, kind = text[0].split()
    rows, cols = int(rows_s), int(cols_s)
    if kind not in ("dense", "banded"):
        raise ValueError(f"unknown matrix kind {kind!r} in {path}")
    data = np.array([[float(x) for x in line.split()] for line in text[1 : 1 + rows]])
    if data.shape != (rows, cols):
        raise ValueError(f"matrix payload shape {data.shape} does not match header")
    return data, kind
