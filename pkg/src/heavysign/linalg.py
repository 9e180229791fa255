"""Dense vector/matrix helpers: norms, sign and matrix-sign operators, densities.

Vectors and matrices are plain float64 numpy arrays.  Every public function
returns fresh arrays and never mutates its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SvdFactorization",
    "as_vector",
    "as_matrix",
    "sign_vec",
    "svd",
    "jacobi_svd",
    "msign",
    "newton_schulz",
    "matrix_abs",
    "psd_sqrt",
    "norm",
    "density_phi",
    "density_psi",
    "NS_COEFFS",
]

# Quintic Newton-Schulz coefficients in common use for Muon.
NS_COEFFS = (3.4445, -4.7750, 2.0315)


def _check_finite(a: np.ndarray, what: str = "input") -> None:
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{what} contains non-finite entries")


def as_vector(x, name: str = "x") -> np.ndarray:
    a = np.array(x, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {a.shape}")
    _check_finite(a, name)
    return a


def as_matrix(X, name: str = "X") -> np.ndarray:
    a = np.array(X, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    _check_finite(a, name)
    return a


def sign_vec(x) -> np.ndarray:
    """Elementwise sign with sign(0) = 0."""
    return np.sign(np.asarray(x, dtype=np.float64))


@dataclass(frozen=True)
class SvdFactorization:
    """Thin SVD truncated to numerical rank r: X ~= U @ diag(s) @ V.T."""

    U: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray

    @property
    def rank(self) -> int:
        return int(self.singular_values.shape[0])

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.singular_values) @ self.V.T


def jacobi_svd(X, tol: float = 1e-15, max_sweeps: int = 60):
    """One-sided (Hestenes) Jacobi SVD.

    Returns full thin factors (U, s, V) with s sorted nonincreasing.  Slower
    than LAPACK but independent of it, so it doubles as a cross-check.
    """
    A = as_matrix(X)
    transposed = A.shape[0] < A.shape[1]
    if transposed:
        A = A.T
    m, n = A.shape
    U = A.copy()
    V = np.eye(n)
    for _ in range(max_sweeps):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                alpha = float(U[:, i] @ U[:, i])
                beta = float(U[:, j] @ U[:, j])
                gamma = float(U[:, i] @ U[:, j])
                if abs(gamma) <= tol * math.sqrt(alpha * beta) or gamma == 0.0:
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.hypot(1.0, zeta))
                c = 1.0 / math.hypot(1.0, t)
                s = c * t
                ui = U[:, i].copy()
                U[:, i] = c * ui - s * U[:, j]
                U[:, j] = s * ui + c * U[:, j]
                vi = V[:, i].copy()
                V[:, i] = c * vi - s * V[:, j]
                V[:, j] = s * vi + c * V[:, j]
        if not rotated:
            break
    sv = np.linalg.norm(U, axis=0)
    order = np.argsort(-sv, kind="stable")
    sv = sv[order]
    U = U[:, order]
    V = V[:, order]
    nz = sv > 0
    U[:, nz] = U[:, nz] / sv[nz]
    if transposed:
        return V, sv, U
    return U, sv, V


def svd(X, rank_tol: float = 1e-12, method: str = "lapack") -> SvdFactorization:
    """Thin SVD keeping singular triples with s_i > rank_tol * s_max."""
    A = as_matrix(X)
    if method == "lapack":
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
        V = Vt.T
    elif method == "jacobi":
        U, s, V = jacobi_svd(A)
    else:
        raise ValueError(f"unknown svd method {method!r}")
    if s.size == 0 or s[0] == 0.0:
        r = 0
    else:
        r = int(np.count_nonzero(s > rank_tol * s[0]))
    return SvdFactorization(U[:, :r].copy(), s[:r].copy(), V[:, :r].copy())


def msign(X, rank_tol: float = 1e-12, method: str = "lapack") -> np.ndarray:
    """Matrix sign U V^T; the zero matrix maps to zero."""
    A = as_matrix(X)
    f = svd(A, rank_tol=rank_tol, method=method)
    if f.rank == 0:
        return np.zeros_like(A)
    return f.U @ f.V.T


def newton_schulz(X, q: int = 5, coeffs: tuple[float, float, float] = NS_COEFFS) -> np.ndarray:
    """Quintic Newton-Schulz approximation of msign(X) with q iterations."""
    A = as_matrix(X)
    if q < 0:
        raise ValueError("q must be nonnegative")
    fro = np.linalg.norm(A)
    if fro == 0.0:
        raise ValueError("newton_schulz requires a nonzero matrix")
    a, b, c = coeffs
    Y = A / fro
    tall = Y.shape[0] > Y.shape[1]
    if tall:
        Y = Y.T
    for _ in range(q):
        G = Y @ Y.T
        Y = a * Y + (b * G + c * (G @ G)) @ Y
    return Y.T if tall else Y


def psd_sqrt(S) -> np.ndarray:
    """Square root of a symmetric PSD matrix (negative rounding clipped)."""
    A = as_matrix(S)
    A = 0.5 * (A + A.T)
    w, Q = np.linalg.eigh(A)
    w = np.clip(w, 0.0, None)
    return (Q * np.sqrt(w)) @ Q.T


def matrix_abs(X) -> np.ndarray:
    """|X| = (X X^T)^{1/2}, computed from the SVD of X."""
    A = as_matrix(X)
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    R = (U * s) @ U.T
    return 0.5 * (R + R.T)


def _l2(a: np.ndarray) -> float:
    # shared by the vector l2 and Frobenius norms so both agree bit for bit
    flat = a.ravel()
    return math.sqrt(float(np.dot(flat, flat)))


def _lp(a: np.ndarray, p: float) -> float:
    if p == math.inf:
        return float(np.max(np.abs(a))) if a.size else 0.0
    if p < 1:
        raise ValueError("p must be >= 1")
    if p == 1:
        return float(np.sum(np.abs(a)))
    if p == 2:
        return _l2(a)
    m = float(np.max(np.abs(a))) if a.size else 0.0
    if m == 0.0:
        return 0.0
    return m * float(np.sum((np.abs(a) / m) ** p)) ** (1.0 / p)


def _check_psd(L: np.ndarray, strict: bool = False) -> None:
    if L.shape[0] != L.shape[1]:
        raise ValueError("weight matrix must be square")
    if not np.allclose(L, L.T, rtol=1e-10, atol=1e-12):
        raise ValueError("weight matrix must be symmetric")
    w = np.linalg.eigvalsh(0.5 * (L + L.T))
    scale = max(1.0, float(np.max(np.abs(w))))
    if strict and w[0] <= 1e-12 * scale:
        raise ValueError("weight matrix must be positive definite")
    if w[0] < -1e-10 * scale:
        raise ValueError("weight matrix must be positive semidefinite")


def norm(x, which: str = "l2", *, p: float | None = None, weights=None) -> float:
    """Norm suite.

    which: l1, l2, linf, lp (needs p), nuclear, operator, frobenius,
    schatten (needs p), weighted_vec (weights l >= 0), weighted_mat (weights
    L PSD, returns sqrt(tr(X^T L X))), inv_weighted_mat (weights L PD, returns
    sqrt(tr(X^T L^{-1} X))).
    """
    a = np.asarray(x, dtype=np.float64)
    _check_finite(a)
    if which == "l1":
        return _lp(a, 1)
    if which in ("l2", "frobenius"):
        return _l2(a)
    if which == "linf":
        return _lp(a, math.inf)
    if which == "lp":
        if p is None:
            raise ValueError("lp norm needs p")
        return _lp(a, p)
    if which in ("nuclear", "operator", "schatten"):
        if a.ndim != 2:
            raise ValueError(f"{which} norm needs a matrix")
        s = np.linalg.svd(a, compute_uv=False)
        if which == "nuclear":
            return float(np.sum(s))
        if which == "operator":
            return float(s[0]) if s.size else 0.0
        if p is None:
            raise ValueError("schatten norm needs p")
        return _lp(s, p)
    if which == "weighted_vec":
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != a.shape:
            raise ValueError("weights must match x in shape")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        return math.sqrt(float(np.sum(w * a * a)))
    if which in ("weighted_mat", "inv_weighted_mat"):
        if a.ndim != 2:
            raise ValueError(f"{which} norm needs a matrix")
        L = as_matrix(weights, "L")
        if L.shape[0] != a.shape[0]:
            raise ValueError("L must be m x m for an m x n matrix")
        if which == "weighted_mat":
            _check_psd(L)
            q = float(np.sum(a * (L @ a)))
        else:
            _check_psd(L, strict=True)
            q = float(np.sum(a * np.linalg.solve(L, a)))
        return math.sqrt(max(q, 0.0))
    raise ValueError(f"unknown norm {which!r}")


def density_phi(v, q: float) -> float:
    """phi_q(v) = ||v||_1 / ||v||_q."""
    a = as_vector(v, "v")
    if q < 1:
        raise ValueError("q must be >= 1")
    den = _lp(a, q)
    if den == 0.0:
        raise ValueError("density of the zero vector is undefined")
    return _lp(a, 1) / den


def density_psi(Y, q: float) -> float:
    """psi_q(Y) = ||Y||_S1 / ||Y||_Sq."""
    A = as_matrix(Y, "Y")
    if q < 1:
        raise ValueError("q must be >= 1")
    s = np.linalg.svd(A, compute_uv=False)
    den = _lp(s, q)
    if den == 0.0:
        raise ValueError("density of the zero matrix is undefined")
    return float(np.sum(s)) / den
