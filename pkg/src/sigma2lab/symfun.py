"""Elementary symmetric functions, Garding cones and the sigma_2 linearization.

Scalar entry points work on :class:`Spectrum` / :class:`SymTensor` values.
The ``*_batch`` helpers operate on stacked numpy arrays (last axis holds the
spectrum, or the last two axes hold the matrix) and are what the samplers and
the grid solver call in their inner loops.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence, Union

import numpy as np

MIN_DIM = 2
MAX_DIM = 8

# asymmetry accepted (then symmetrized) at SymTensor construction, relative to max|entry|
_SYM_RTOL = 64 * np.finfo(float).eps


class DomainError(ValueError):
    """Argument outside the domain of a symmetric-function operation."""


def _check_dim(n: int) -> None:
    if not MIN_DIM <= n <= MAX_DIM:
        raise DomainError(f"dimension {n} outside [{MIN_DIM}, {MAX_DIM}]")


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalue vector ``values`` of length ``n``."""

    values: tuple[float, ...]

    def __init__(self, values: Sequence[float]):
        vals = tuple(float(v) for v in values)
        _check_dim(len(vals))
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return len(self.values)

    def sorted(self) -> "Spectrum":
        # stable sort on the negated values: ties keep their index order
        order = sorted(range(self.n), key=lambda i: -self.values[i])
        return Spectrum([self.values[i] for i in order])

    def is_sorted(self) -> bool:
        return all(a >= b for a, b in zip(self.values, self.values[1:]))

    def as_array(self) -> np.ndarray:
        return np.array(self.values)


class SymTensor:
    """Immutable symmetric n x n matrix.

    Input that is symmetric up to rounding (as produced by ``Q @ D @ Q.T``) is
    symmetrized; anything further from symmetric is rejected.
    """

    __slots__ = ("_a",)

    def __init__(self, entries):
        a = np.array(entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DomainError(f"expected a square matrix, got shape {a.shape}")
        _check_dim(a.shape[0])
        if not np.all(np.isfinite(a)):
            raise DomainError("matrix has non-finite entries")
        scale = float(np.abs(a).max()) if a.size else 0.0
        asym = float(np.abs(a - a.T).max())
        if asym > _SYM_RTOL * max(scale, 1e-300):
            raise DomainError(f"matrix is not symmetric (max |W_ij - W_ji| = {asym:.3e})")
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        self._a = a

    @classmethod
    def diag(cls, values: Sequence[float]) -> "SymTensor":
        return cls(np.diag(np.asarray(values, dtype=float)))

    @property
    def entries(self) -> np.ndarray:
        return self._a

    @property
    def n(self) -> int:
        return self._a.shape[0]

    def is_diagonal(self) -> bool:
        return not np.any(self._a - np.diag(np.diag(self._a)))

    def diagonal(self) -> np.ndarray:
        return np.diag(self._a).copy()

    def __eq__(self, other):
        return isinstance(other, SymTensor) and np.array_equal(self._a, other._a)

    def __hash__(self):
        return hash(self._a.tobytes())

    def __repr__(self):
        return f"SymTensor({self._a.tolist()!r})"


SpectrumLike = Union[Spectrum, Sequence[float], np.ndarray]


def _as_values(s: SpectrumLike) -> np.ndarray:
    if isinstance(s, Spectrum):
        return s.as_array()
    v = np.asarray(s, dtype=float)
    _check_dim(v.shape[-1])
    return v


def _as_matrix(W) -> np.ndarray:
    if isinstance(W, SymTensor):
        return W.entries
    return SymTensor(W).entries


# -- elementary symmetric functions -------------------------------------------

def sigma_k_batch(lam: np.ndarray, k: int) -> np.ndarray:
    """sigma_k over the last axis of ``lam``.

    Uses the subset-sum recurrence e_j <- e_j + x * e_{j-1}, which only adds
    products of the inputs (no power sums, so no cancellation from Newton's
    identities).
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    if not 0 <= k <= n:
        raise DomainError(f"k={k} outside [0, {n}]")
    if k == 0:
        return np.ones(lam.shape[:-1])
    e = np.zeros(lam.shape[:-1] + (k + 1,))
    e[..., 0] = 1.0
    for j in range(n):
        x = lam[..., j]
        for q in range(min(j + 1, k), 0, -1):
            e[..., q] += x * e[..., q - 1]
    return e[..., k]


def sigma_all_batch(lam: np.ndarray, kmax: int) -> np.ndarray:
    """Stack of sigma_0 .. sigma_kmax over the last axis (returned on a new last axis)."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    if not 0 <= kmax <= n:
        raise DomainError(f"kmax={kmax} outside [0, {n}]")
    e = np.zeros(lam.shape[:-1] + (kmax + 1,))
    e[..., 0] = 1.0
    for j in range(n):
        x = lam[..., j]
        for q in range(min(j + 1, kmax), 0, -1):
            e[..., q] += x * e[..., q - 1]
    return e


def sigma_k(s: SpectrumLike, k: int) -> float:
    """k-th elementary symmetric function of a spectrum (sigma_0 = 1)."""
    return float(sigma_k_batch(_as_values(s), k))


def _char_coeffs(a: np.ndarray, kmax: int) -> list[float]:
    """sigma_0..sigma_kmax of a square matrix via the Faddeev-LeVerrier recursion."""
    n = a.shape[0]
    out = [1.0]
    M = np.eye(n)
    c = 1.0
    for k in range(1, kmax + 1):
        AM = a @ M
        c = -np.trace(AM) / k
        out.append((-1) ** k * c)
        M = AM + c * np.eye(n)
    return out


def sigma_k_mat(W, k: int) -> float:
    """sigma_k of a symmetric matrix from its invariants (no eigendecomposition).

    k = 1 is the trace; k = 2 is (tr W)^2 - tr W^2 halved, evaluated in the
    expanded pairwise form sum_{i<j} (W_ii W_jj - W_ij^2) which avoids the
    cancellation between the two squares; k >= 3 uses characteristic
    polynomial coefficients.
    """
    a = _as_matrix(W)
    n = a.shape[0]
    if not 0 <= k <= n:
        raise DomainError(f"k={k} outside [0, {n}]")
    if k == 0:
        return 1.0
    if k == 1:
        return float(np.trace(a))
    if k == 2:
        return float(sigma2_batch(a))
    if k == n == 3:
        return _det3(a)
    return float(_char_coeffs(a, k)[k])


def _det3(a: np.ndarray) -> float:
    return float(
        a[0, 0] * (a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1])
        - a[0, 1] * (a[1, 0] * a[2, 2] - a[1, 2] * a[2, 0])
        + a[0, 2] * (a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0])
    )


def sigma1_batch(H: np.ndarray) -> np.ndarray:
    return np.trace(H, axis1=-2, axis2=-1)


def sigma2_batch(H: np.ndarray) -> np.ndarray:
    """sigma_2 of stacked symmetric matrices (..., n, n)."""
    H = np.asarray(H, dtype=float)
    n = H.shape[-1]
    out = np.zeros(H.shape[:-2])
    for i in range(n):
        for j in range(i + 1, n):
            out += H[..., i, i] * H[..., j, j] - H[..., i, j] * H[..., j, i]
    return out


def sigma3_batch(H: np.ndarray) -> np.ndarray:
    """sigma_3 of stacked symmetric matrices: sum of 3x3 principal minors (n <= 3 exact path)."""
    H = np.asarray(H, dtype=float)
    n = H.shape[-1]
    if n < 3:
        return np.zeros(H.shape[:-2])
    if n == 3:
        return np.linalg.det(H)
    # sigma_3 = (p1^3 - 3 p1 p2 + 2 p3) / 6 with p_j = tr(H^j)
    p1 = np.trace(H, axis1=-2, axis2=-1)
    H2 = H @ H
    p2 = np.trace(H2, axis1=-2, axis2=-1)
    p3 = np.einsum("...ij,...ji->...", H2, H)
    return (p1 ** 3 - 3 * p1 * p2 + 2 * p3) / 6.0


def sigma2_gradient_batch(H: np.ndarray) -> np.ndarray:
    """d sigma_2 / d W_ij = sigma_1 delta_ij - W_ij, for stacked matrices."""
    H = np.asarray(H, dtype=float)
    n = H.shape[-1]
    return sigma1_batch(H)[..., None, None] * np.eye(n) - H


def sigma2_gradient(W) -> SymTensor:
    """Coefficient matrix sigma_2^{ij}(W) of the linearized sigma_2 operator."""
    return SymTensor(sigma2_gradient_batch(_as_matrix(W)))


def gamma2_mask(H: np.ndarray) -> np.ndarray:
    """Strict Gamma_2 membership (sigma_1 > 0 and sigma_2 > 0) for stacked matrices."""
    return (sigma1_batch(H) > 0) & (sigma2_batch(H) > 0)


class ConeCheck(NamedTuple):
    inside: bool
    margins: tuple[float, ...]  # sigma_1 .. sigma_k


def in_gamma_k(s, k: int) -> ConeCheck:
    """Membership of a spectrum or symmetric matrix in the open cone Gamma_k.

    The cone test is strict (sigma_j > 0 for j = 1..k) with no slack; callers
    that want tolerance apply it to the returned margins.
    """
    if isinstance(s, SymTensor) or (not isinstance(s, Spectrum) and np.ndim(s) == 2):
        a = _as_matrix(s)
        n = a.shape[0]
        if not 1 <= k <= n:
            raise DomainError(f"k={k} outside [1, {n}]")
        margins = tuple(sigma_k_mat(a, j) for j in range(1, k + 1))
    else:
        v = _as_values(s)
        n = v.shape[-1]
        if not 1 <= k <= n:
            raise DomainError(f"k={k} outside [1, {n}]")
        e = sigma_all_batch(v, k)
        margins = tuple(float(x) for x in e[1:])
    return ConeCheck(all(m > 0 for m in margins), margins)


# -- eigenvalues ----------------------------------------------------------------

def _eig2(a: np.ndarray) -> tuple[float, float]:
    p, q, r = a[0, 0], a[0, 1], a[1, 1]
    mean = 0.5 * (p + r)
    rad = math.hypot(0.5 * (p - r), q)
    return mean + rad, mean - rad


def _eig3(a: np.ndarray) -> tuple[float, float, float]:
    off = a[0, 1] ** 2 + a[0, 2] ** 2 + a[1, 2] ** 2
    if off == 0.0:
        d = sorted(np.diag(a).tolist(), reverse=True)
        return d[0], d[1], d[2]
    q = np.trace(a) / 3.0
    p2 = ((a[0, 0] - q) ** 2 + (a[1, 1] - q) ** 2 + (a[2, 2] - q) ** 2 + 2.0 * off)
    p = math.sqrt(p2 / 6.0)
    B = (a - q * np.eye(3)) / p
    r = _det3(B) / 2.0
    r = min(1.0, max(-1.0, r))
    phi = math.acos(r) / 3.0
    e1 = q + 2.0 * p * math.cos(phi)
    e3 = q + 2.0 * p * math.cos(phi + 2.0 * math.pi / 3.0)
    e2 = 3.0 * q - e1 - e3
    return tuple(sorted((e1, e2, e3), reverse=True))


def eigenvalues_sym(W, method: str = "auto") -> Spectrum:
    """Eigenvalues of a symmetric matrix, sorted non-increasing.

    ``method="closed"`` uses the characteristic-root formulas (n = 2, 3 only),
    ``"iterative"`` uses LAPACK's symmetric QR iteration, ``"auto"`` picks the
    closed form when available.
    """
    a = _as_matrix(W)
    n = a.shape[0]
    if method == "auto":
        method = "closed" if n <= 3 else "iterative"
    if method == "closed":
        if n == 2:
            return Spectrum(_eig2(a))
        if n == 3:
            return Spectrum(_eig3(a))
        raise DomainError(f"closed-form eigenvalues only for n <= 3, got n={n}")
    if method != "iterative":
        raise DomainError(f"unknown method {method!r}")
    w = np.linalg.eigvalsh(a)
    return Spectrum(w[::-1])


def eigh_sorted(W) -> tuple[Spectrum, np.ndarray]:
    """Eigenvalues (non-increasing) and matching orthonormal eigenvectors as columns."""
    a = _as_matrix(W)
    w, Q = np.linalg.eigh(a)
    return Spectrum(w[::-1]), Q[:, ::-1]


def shift_spectrum(s: SpectrumLike, a: float) -> Spectrum:
    """Spectrum of W + aI."""
    v = _as_values(s)
    return Spectrum(v + a)
