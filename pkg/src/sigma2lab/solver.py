"""Damped Newton finite-difference solver for sigma_2(D^2 u) = 1 on boxes.

Second derivatives use the standard narrow stencils: 3-point central
differences on the diagonal and the 4-point cross stencil off the diagonal.
Both are exact on quadratics, so quadratic Dirichlet data with
sigma_2(D^2 g) = 1 is reproduced exactly by the discrete problem.

Newton steps solve the linearization sigma_2^{ij}(D^2 u) D_ij du = -F(u)
with GMRES + Jacobi preconditioning and are damped by halving until every
interior discrete Hessian stays in Gamma_2 and the max-norm residual drops.
Narrow stencils are not monotone: for non-smooth data nothing guarantees
convergence to the viscosity solution.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .reporting import SCHEMA_VERSION
from .symfun import SymTensor, gamma2_mask, sigma1_batch, sigma2_batch, sigma2_gradient_batch

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


class EllipticityLossError(SolverError):
    """The iterate (or every damped trial step) left discrete Gamma_2."""

    def __init__(self, node, iteration, history):
        self.node = tuple(int(i) for i in node)
        self.iteration = iteration
        self.history = list(history)
        super().__init__(f"ellipticity lost at node {self.node} (iteration {iteration})")


class NonConvergenceError(SolverError):
    def __init__(self, reason, history):
        self.reason = reason
        self.history = list(history)
        last = history[-1] if history else float("nan")
        super().__init__(f"Newton did not converge: {reason} (last residual {last:.3e})")


# -- grid types --------------------------------------------------------------------

@dataclass(frozen=True)
class GridDomain:
    """Uniform isotropic grid with ``m`` nodes per axis on the box [lo, hi]."""

    n: int
    lo: tuple
    hi: tuple
    m: int

    def __init__(self, n: int, lo, hi, m: int):
        lo = tuple(float(x) for x in (np.broadcast_to(lo, (n,))))
        hi = tuple(float(x) for x in (np.broadcast_to(hi, (n,))))
        if n < 1:
            raise ValueError("n must be positive")
        if m < 5:
            raise ValueError(f"m={m}: need at least 5 nodes per axis")
        widths = [b - a for a, b in zip(lo, hi)]
        if min(widths) <= 0:
            raise ValueError("box must have hi > lo on every axis")
        if max(widths) - min(widths) > 1e-12 * max(widths):
            raise ValueError("grid must be isotropic: all box widths equal")
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "m", int(m))

    @classmethod
    def cube(cls, n: int, m: int, half_width: float = 1.0, center=0.0) -> "GridDomain":
        c = np.broadcast_to(np.asarray(center, dtype=float), (n,))
        return cls(n, c - half_width, c + half_width, m)

    @property
    def h(self) -> float:
        return (self.hi[0] - self.lo[0]) / (self.m - 1)

    @property
    def shape(self) -> tuple:
        return (self.m,) * self.n

    @property
    def interior_shape(self) -> tuple:
        return (self.m - 2,) * self.n

    @property
    def diameter(self) -> float:
        return math.sqrt(sum((b - a) ** 2 for a, b in zip(self.lo, self.hi)))

    def axes(self) -> list:
        return [np.linspace(a, b, self.m) for a, b in zip(self.lo, self.hi)]

    def mesh(self) -> np.ndarray:
        """Node coordinates, shape (m,)*n + (n,)."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def boundary_mask(self) -> np.ndarray:
        mask = np.ones(self.shape, dtype=bool)
        mask[(slice(1, -1),) * self.n] = False
        return mask

    def to_dict(self):
        return {"n": self.n, "lo": list(self.lo), "hi": list(self.hi), "m": self.m, "h": self.h}


@dataclass(frozen=True)
class ScalarField:
    domain: GridDomain
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.domain.shape:
            raise ValueError(f"values shape {v.shape} != grid shape {self.domain.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def interior(self) -> np.ndarray:
        return self.values[(slice(1, -1),) * self.domain.n]

    def boundary_values(self) -> np.ndarray:
        return self.values[self.domain.boundary_mask()]


@dataclass(frozen=True)
class Quadratic:
    """g(x) = 1/2 x^T M x + b.x + c, usable as Dirichlet data or an entire candidate."""

    M: np.ndarray
    b: Optional[np.ndarray] = None
    c: float = 0.0

    def __post_init__(self):
        M = SymTensor(self.M).entries
        object.__setattr__(self, "M", M)
        b = np.zeros(M.shape[0]) if self.b is None else np.asarray(self.b, dtype=float)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.M.shape[0]

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", X, self.M, X) + X @ self.b + self.c

    def hessian(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.broadcast_to(self.M, X.shape[:-1] + self.M.shape)


@dataclass(frozen=True)
class SolveConfig:
    tol_residual: float = 1e-10
    max_newton: int = 50
    max_halvings: int = 30
    krylov_tol: float = 1e-12
    linear_solver: str = "gmres"  # or "direct"
    krylov_restart: int = 200
    krylov_maxiter: int = 50

    def __post_init__(self):
        for name in ("tol_residual", "max_newton", "max_halvings", "krylov_tol",
                     "krylov_restart", "krylov_maxiter"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.linear_solver not in ("gmres", "direct"):
            raise ValueError(f"unknown linear solver {self.linear_solver!r}")


@dataclass(frozen=True)
class SolveReport:
    field: ScalarField
    residual_history: tuple
    gamma2_certified: bool
    iterations: int
    step_sizes: tuple = ()
    krylov_iterations: tuple = ()
    min_ellipticity: float = float("nan")  # min eigenvalue of sigma_2^{ij}(D^2 u) over interior
    initial_guess: str = ""
    data: str = ""
    linear_fallbacks: int = 0

    @property
    def converged(self) -> bool:
        return bool(self.residual_history) and self.residual_history[-1] <= self._tol

    _tol: float = 1e-10

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "domain": self.field.domain.to_dict(),
            "residual_history": list(self.residual_history),
            "gamma2_certified": self.gamma2_certified,
            "iterations": self.iterations,
            "converged": self.converged,
            "step_sizes": list(self.step_sizes),
            "krylov_iterations": list(self.krylov_iterations),
            "min_ellipticity": self.min_ellipticity,
            "initial_guess": self.initial_guess,
            "data": self.data,
            "linear_fallbacks": self.linear_fallbacks,
        }


# -- stencils ---------------------------------------------------------------------

def _shifted(u: np.ndarray, off: Sequence[int]) -> np.ndarray:
    m = u.shape[0]
    return u[tuple(slice(1 + o, m - 1 + o) for o in off)]


def hessian_field(values: np.ndarray, h: float) -> np.ndarray:
    """Discrete Hessians at all interior nodes, shape (m-2,)*n + (n, n)."""
    u = np.asarray(values, dtype=float)
    n = u.ndim
    H = np.empty(tuple(s - 2 for s in u.shape) + (n, n))
    zero = [0] * n
    c = _shifted(u, zero)
    h2 = h * h
    for i in range(n):
        ep, em = list(zero), list(zero)
        ep[i], em[i] = 1, -1
        H[..., i, i] = (_shifted(u, ep) - 2.0 * c + _shifted(u, em)) / h2
        for j in range(i + 1, n):
            def corner(a, b):
                o = list(zero)
                o[i], o[j] = a, b
                return _shifted(u, o)
            v = (corner(1, 1) - corner(1, -1) - corner(-1, 1) + corner(-1, -1)) / (4.0 * h2)
            H[..., i, j] = v
            H[..., j, i] = v
    return H


def discrete_hessian(f: ScalarField, node) -> SymTensor:
    """Discrete Hessian at one node, which must not lie on the boundary."""
    node = tuple(int(i) for i in node)
    dom = f.domain
    if len(node) != dom.n:
        raise IndexError(f"node {node} has wrong dimension")
    if any(i < 1 or i > dom.m - 2 for i in node):
        raise IndexError(f"node {node} is on or outside the boundary")
    patch = f.values[tuple(slice(i - 1, i + 2) for i in node)]
    return SymTensor(hessian_field(patch, dom.h).reshape(dom.n, dom.n))


def residual(f: ScalarField) -> np.ndarray:
    """sigma_2(D^2_h u) - 1 at interior nodes."""
    return sigma2_batch(hessian_field(f.values, f.domain.h)) - 1.0


def residual_norm(f: ScalarField) -> float:
    return float(np.abs(residual(f)).max())


# -- initial guesses ---------------------------------------------------------------

def barrier_coefficient(n: int) -> float:
    """Coefficient c of |x|^2 in the barrier: D^2 w = 2c I with sigma_2 = C(n,2) (2c)^2 = 1."""
    return 1.0 / math.sqrt(2 * n * (n - 1))


def barrier_values(dom: GridDomain, a: float) -> np.ndarray:
    X = dom.mesh()
    return barrier_coefficient(dom.n) * np.sum(X * X, axis=-1) - a


def barrier_initial_guess(dom: GridDomain, a: float) -> ScalarField:
    """w = |x|^2 / sqrt(2n(n-1)) - a sampled on the grid."""
    return ScalarField(dom, barrier_values(dom, a))


def barrier_level(dom: GridDomain, g: Optional[Callable] = None) -> float:
    """Smallest a with w <= g on the boundary (g = 0 when omitted)."""
    X = dom.mesh()[dom.boundary_mask()]
    w0 = barrier_coefficient(dom.n) * np.sum(X * X, axis=-1)
    gb = np.zeros(len(X)) if g is None else np.asarray(g(X), dtype=float)
    return float(np.max(w0 - gb))


# -- Jacobian -------------------------------------------------------------------

class _Stencil:
    """Sparsity pattern of sigma_2^{ij} D_ij on interior unknowns, built once per grid."""

    def __init__(self, dom: GridDomain):
        n, mi = dom.n, dom.m - 2
        self.N = mi ** n
        self.h = dom.h
        coords = np.indices((mi,) * n).reshape(n, -1).T
        self.entries = []  # (rows, cols, i, j, weight)
        zero = [0] * n

        def add(off, i, j, weight):
            c = coords + np.asarray(off)
            ok = np.all((c >= 0) & (c < mi), axis=1)
            rows = np.nonzero(ok)[0]
            cols = np.ravel_multi_index(c[ok].T, (mi,) * n)
            self.entries.append((rows, cols, i, j, weight))

        for i in range(n):
            ep, em = list(zero), list(zero)
            ep[i], em[i] = 1, -1
            add(ep, i, i, 1.0)
            add(em, i, i, 1.0)
            add(zero, i, i, -2.0)
            for j in range(i + 1, n):
                for a, b, s in ((1, 1, 1.0), (1, -1, -1.0), (-1, 1, -1.0), (-1, -1, 1.0)):
                    o = list(zero)
                    o[i], o[j] = a, b
                    # sigma^{ij} D_ij + sigma^{ji} D_ji = 2 sigma^{ij} D_ij
                    add(o, i, j, 2.0 * s / 4.0)

    def matrix(self, G: np.ndarray) -> sp.csr_matrix:
        """Assemble the linearized operator from coefficient matrices G (interior, n, n)."""
        h2 = self.h * self.h
        n = G.shape[-1]
        Gf = G.reshape(-1, n, n)
        rows, cols, vals = [], [], []
        for r, c, i, j, w in self.entries:
            rows.append(r)
            cols.append(c)
            vals.append(w * Gf[r, i, j] / h2)
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(self.N, self.N))


def _linear_solve(J, rhs, cfg: SolveConfig):
    if cfg.linear_solver == "direct":
        return spla.spsolve(J.tocsc(), rhs), 0, False
    d = J.diagonal()
    M = spla.LinearOperator(J.shape, matvec=lambda v: v / d, dtype=float)
    count = [0]

    def cb(_):
        count[0] += 1

    x, info = spla.gmres(J, rhs, M=M, rtol=cfg.krylov_tol, atol=0.0, restart=cfg.krylov_restart,
                         maxiter=cfg.krylov_maxiter, callback=cb, callback_type="pr_norm")
    if info != 0:
        log.warning("GMRES did not reach krylov_tol (info=%d); falling back to a direct solve", info)
        return spla.spsolve(J.tocsc(), rhs), count[0], True
    return x, count[0], False


def _first_bad_node(H: np.ndarray) -> tuple:
    bad = ~gamma2_mask(H)
    idx = np.argwhere(bad)[0]
    return tuple(int(i) + 1 for i in idx)  # interior index -> grid index


def ellipticity_margin(H: np.ndarray) -> float:
    """Minimum eigenvalue of sigma_2^{ij}(H) over all nodes."""
    G = sigma2_gradient_batch(H)
    return float(np.linalg.eigvalsh(G.reshape(-1, G.shape[-1], G.shape[-1])).min())


# -- Newton --------------------------------------------------------------------

DataLike = Union[None, float, Callable]


def _describe(g) -> str:
    if g is None:
        return "zero"
    if isinstance(g, Quadratic):
        return f"quadratic(M={g.M.tolist()}, b={g.b.tolist()}, c={g.c})"
    return getattr(g, "__name__", type(g).__name__)


def newton_solve(dom: GridDomain, g: DataLike = None, cfg: SolveConfig = SolveConfig(),
                 initial: Union[str, ScalarField, np.ndarray] = "auto") -> SolveReport:
    """Solve sigma_2(D^2 u) = 1 in the box with u = g on the boundary.

    ``g`` is ``None`` (zero data), a :class:`Quadratic`, or any callable on
    node coordinates of shape (..., n).  ``initial="auto"`` starts from the
    data itself when it is a quadratic with Hessian in Gamma_2, otherwise from
    the barrier shifted down until it lies below the data on the boundary.

    Raises
    ------
    EllipticityLossError
        The initial guess, or every damped step of some iteration, leaves
        discrete Gamma_2.
    NonConvergenceError
        ``max_newton`` iterations without reaching ``tol_residual``, or the
        line search cannot reduce the residual.
    """
    X = dom.mesh()
    bmask = dom.boundary_mask()
    gvals = np.zeros(dom.shape) if g is None else np.broadcast_to(np.asarray(g(X), float), dom.shape)
    if not np.all(np.isfinite(gvals[bmask])):
        raise ValueError("boundary data is not finite")

    if isinstance(initial, str):
        mode = initial
        if mode == "auto":
            quad_ok = isinstance(g, Quadratic) and bool(gamma2_mask(g.M))
            mode = "data" if quad_ok else "barrier"
        if mode == "data":
            u = np.array(gvals, dtype=float)
        elif mode == "barrier":
            u = barrier_values(dom, barrier_level(dom, g))
        else:
            raise ValueError(f"unknown initial guess {initial!r}")
    else:
        mode = "given"
        u = np.array(initial.values if isinstance(initial, ScalarField) else initial, dtype=float)
    u[bmask] = gvals[bmask]

    interior = (slice(1, -1),) * dom.n
    h = dom.h
    stencil = _Stencil(dom)
    H = hessian_field(u, h)
    if not gamma2_mask(H).all():
        raise EllipticityLossError(_first_bad_node(H), 0, [])
    F = sigma2_batch(H) - 1.0
    res = float(np.abs(F).max())
    history = [res]
    steps, kits = [], []
    fallbacks = 0
    it = 0
    while res > cfg.tol_residual:
        if it >= cfg.max_newton:
            raise NonConvergenceError(f"max_newton={cfg.max_newton} exceeded", history)
        G = sigma2_gradient_batch(H)
        J = stencil.matrix(G)
        du, k, fb = _linear_solve(J, -F.ravel(), cfg)
        fallbacks += int(fb)
        kits.append(k)
        du = du.reshape(dom.interior_shape)
        lam = 1.0
        accepted = False
        lost_node = None
        for _ in range(cfg.max_halvings + 1):
            trial = u.copy()
            trial[interior] += lam * du
            Ht = hessian_field(trial, h)
            if not gamma2_mask(Ht).all():
                lost_node = _first_bad_node(Ht)
            else:
                Ft = sigma2_batch(Ht) - 1.0
                rt = float(np.abs(Ft).max())
                if rt < res:
                    accepted = True
                    break
            lam *= 0.5
        it += 1
        if not accepted:
            if lost_node is not None:
                raise EllipticityLossError(lost_node, it, history)
            raise NonConvergenceError("line search could not reduce the residual", history)
        u, H, F, res = trial, Ht, Ft, rt
        history.append(res)
        steps.append(lam)
        log.debug("newton %d: residual %.3e, step %g, krylov %d", it, res, lam, k)

    cert = bool(gamma2_mask(H).all())
    report = SolveReport(
        field=ScalarField(dom, u),
        residual_history=tuple(history),
        gamma2_certified=cert,
        iterations=it,
        step_sizes=tuple(steps),
        krylov_iterations=tuple(kits),
        min_ellipticity=ellipticity_margin(H),
        initial_guess=mode,
        data=_describe(g),
        linear_fallbacks=fallbacks,
        _tol=cfg.tol_residual,
    )
    return report


# -- field I/O --------------------------------------------------------------------

def save_field(stem, f: ScalarField, extra: Optional[dict] = None) -> tuple[Path, Path]:
    """Write ``stem.json`` (header) and ``stem.bin`` (little-endian float64, C order)."""
    stem = Path(stem)
    header = {"schema_version": SCHEMA_VERSION, "domain": f.domain.to_dict(),
              "dtype": "<f8", "order": "C", "data_file": stem.name + ".bin"}
    if extra:
        header.update(extra)
    jpath = stem.with_name(stem.name + ".json")
    bpath = stem.with_name(stem.name + ".bin")
    bpath.write_bytes(np.ascontiguousarray(f.values, dtype="<f8").tobytes())
    jpath.write_text(json.dumps(header, sort_keys=True, indent=2) + "\n")
    return jpath, bpath


def load_field(header_path) -> ScalarField:
    header_path = Path(header_path)
    header = json.loads(header_path.read_text())
    d = header["domain"]
    dom = GridDomain(d["n"], d["lo"], d["hi"], d["m"])
    raw = np.frombuffer((header_path.parent / header["data_file"]).read_bytes(), dtype="<f8")
    return ScalarField(dom, raw.reshape(dom.shape))
