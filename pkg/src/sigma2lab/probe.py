"""Numerical probes of the interior-estimate and rigidity mechanisms.

Every probe is a pure function of its inputs and seed.  Reported extrema
break ties by the lowest C-order node index (``np.argmax`` semantics).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import sampling
from .reporting import SCHEMA_VERSION, write_csv
from .solver import GridDomain, ScalarField, SolveReport, hessian_field
from .symfun import (DomainError, gamma2_mask, sigma1_batch, sigma2_batch, sigma2_gradient_batch,
                     sigma3_batch, sigma_all_batch)

FieldLike = Union[SolveReport, ScalarField]


class ProbeError(ValueError):
    """A probe precondition does not hold (empty or unbounded sublevel set, u > 0, ...)."""


def _field(f: FieldLike) -> ScalarField:
    return f.field if isinstance(f, SolveReport) else f


def _grid_index(dom: GridDomain, flat: int, offset: int = 1) -> tuple:
    return tuple(int(i) + offset for i in np.unravel_index(flat, (dom.m - 2 * offset,) * dom.n))


def _spectral_norm(H: np.ndarray) -> np.ndarray:
    ev = np.linalg.eigvalsh(H)
    return np.maximum(np.abs(ev[..., 0]), np.abs(ev[..., -1]))


# -- Pogorelov quantity -------------------------------------------------------------

VARIANTS = ("largest-eigenvalue", "laplacian")


@dataclass(frozen=True)
class PogorelovConfig:
    alpha: float = 50.0
    variant: str = "largest-eigenvalue"

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")


@dataclass(frozen=True)
class PogorelovReport:
    alpha: float
    variant: str
    value: float
    argmax: tuple
    clamped_value: float  # max (-u)^alpha max{|D^2 u|, 1}
    clamped_argmax: tuple
    max_eigenvalue_value: float  # max (-u)^alpha lambda_max(D^2 u)
    strictly_interior: bool
    clamped_strictly_interior: bool
    diameter: float

    @property
    def finite(self) -> bool:
        return math.isfinite(self.value) and math.isfinite(self.clamped_value)

    def to_dict(self):
        d = dict(self.__dict__)
        d["finite"] = self.finite
        d["schema_version"] = SCHEMA_VERSION
        return d


def _deep(dom: GridDomain, node: tuple) -> bool:
    return all(2 <= i <= dom.m - 3 for i in node)


def _require_nonpositive(f: ScalarField, strict: bool):
    u = f.interior
    bad = u >= 0 if strict else u > 0
    if bad.any():
        node = _grid_index(f.domain, int(np.argmax(bad.ravel())))
        raise DomainError(f"u {'>=' if strict else '>'} 0 at interior node {node}")


def pogorelov_quantity(rep: FieldLike, cfg: PogorelovConfig = PogorelovConfig()) -> PogorelovReport:
    """max over interior nodes of (-u)^alpha q with q = |D^2 u| or max{Delta u, 1}.

    Raises
    ------
    DomainError
        Some interior value is positive.
    """
    f = _field(rep)
    dom = f.domain
    _require_nonpositive(f, strict=False)
    H = hessian_field(f.values, dom.h)
    w = (-f.interior) ** cfg.alpha
    norm = _spectral_norm(H)
    if cfg.variant == "largest-eigenvalue":
        q = norm
    else:
        q = np.maximum(sigma1_batch(H), 1.0)
    vals = (w * q).ravel()
    clamped = (w * np.maximum(norm, 1.0)).ravel()
    top = (w * np.linalg.eigvalsh(H)[..., -1]).ravel()
    i, j = int(np.argmax(vals)), int(np.argmax(clamped))
    ni, nj = _grid_index(dom, i), _grid_index(dom, j)
    return PogorelovReport(
        alpha=cfg.alpha, variant=cfg.variant,
        value=float(vals[i]), argmax=ni,
        clamped_value=float(clamped[j]), clamped_argmax=nj,
        max_eigenvalue_value=float(top.max()),
        strictly_interior=_deep(dom, ni), clamped_strictly_interior=_deep(dom, nj),
        diameter=dom.diameter,
    )


@dataclass(frozen=True)
class AuxReport:
    field: ScalarField  # P on interior nodes, -inf on the boundary
    max_value: float
    argmax: tuple
    interior_certified: bool  # max strictly above every node of the first interior layer
    gradient: tuple  # centered differences of P at the argmax (nan if not available)
    clamped_fraction: float  # share of interior nodes with Delta u <= 1

    @property
    def gradient_norm(self) -> float:
        return float(np.linalg.norm(self.gradient))

    def to_dict(self):
        return {"schema_version": SCHEMA_VERSION, "max_value": self.max_value, "argmax": self.argmax,
                "interior_certified": self.interior_certified, "gradient": self.gradient,
                "gradient_norm": self.gradient_norm, "clamped_fraction": self.clamped_fraction}


def aux_function_field(rep: FieldLike, cfg: PogorelovConfig = PogorelovConfig()) -> AuxReport:
    """P = alpha log(-u) + log max{Delta u, 1} + |x|^2 / 2 on interior nodes.

    P tends to -inf on the boundary, so a maximum over the grid sits inside.
    The certificate asks for more: the max must beat every node of the first
    interior layer.  The centered-difference gradient at the argmax is the
    discrete analogue of the first-order condition there.
    """
    f = _field(rep)
    dom = f.domain
    _require_nonpositive(f, strict=True)
    H = hessian_field(f.values, dom.h)
    lap = sigma1_batch(H)
    X = dom.mesh()[(slice(1, -1),) * dom.n]
    P_int = cfg.alpha * np.log(-f.interior) + np.log(np.maximum(lap, 1.0)) + 0.5 * np.sum(X * X, axis=-1)
    P = np.full(dom.shape, -np.inf)
    P[(slice(1, -1),) * dom.n] = P_int
    k = int(np.argmax(P_int.ravel()))
    node = _grid_index(dom, k)
    layer = np.ones(dom.interior_shape, dtype=bool)
    layer[(slice(1, -1),) * dom.n] = False
    cert = bool(P_int.ravel()[k] > P_int[layer].max())
    if _deep(dom, node):
        grad = []
        for ax in range(dom.n):
            up, dn = list(node), list(node)
            up[ax] += 1
            dn[ax] -= 1
            grad.append(float((P[tuple(up)] - P[tuple(dn)]) / (2 * dom.h)))
    else:
        grad = [float("nan")] * dom.n
    return AuxReport(
        field=ScalarField(dom, P), max_value=float(P_int.ravel()[k]), argmax=node,
        interior_certified=cert, gradient=tuple(grad),
        clamped_fraction=float(np.mean(lap <= 1.0)),
    )


# -- closed-form candidates -------------------------------------------------------------

@dataclass(frozen=True)
class Candidate:
    """Closed-form function on R^n with its Hessian; stands in for an entire solution."""

    name: str
    n: int
    value: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray]

    def __call__(self, X):
        return self.value(np.asarray(X, dtype=float))


def quad(n: int = 3) -> Candidate:
    """u = c |x|^2 / 2 with c = sqrt(2 / (n(n-1))), so sigma_2(D^2 u) = 1."""
    c = math.sqrt(2.0 / (n * (n - 1)))

    def value(X):
        return 0.5 * c * np.sum(X * X, axis=-1)

    def hess(X):
        return np.broadcast_to(c * np.eye(n), X.shape[:-1] + (n, n)).copy()

    return Candidate("quad", n, value, hess)


def quad_bump(n: int = 3, delta: float = 0.05) -> Candidate:
    """quad plus delta (1 - |x|^2)_+^4, a C^3 compactly supported perturbation."""
    base = quad(n)

    def value(X):
        r2 = np.sum(X * X, axis=-1)
        return base.value(X) + delta * np.maximum(1.0 - r2, 0.0) ** 4

    def hess(X):
        r2 = np.sum(X * X, axis=-1)
        s = np.maximum(1.0 - r2, 0.0)
        # D^2 (1-r^2)^4 = -8 s^3 I + 48 s^2 x x^T
        H = base.hessian(X)
        H += delta * (-8.0 * s[..., None, None] ** 3 * np.eye(n)
                      + 48.0 * s[..., None, None] ** 2 * X[..., :, None] * X[..., None, :])
        return H

    return Candidate(f"quad_bump(delta={delta})", n, value, hess)


def warren_value(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    x, y, t = X[..., 0], X[..., 1], X[..., 2]
    return (x * x + y * y) * np.exp(t) + 0.25 * np.exp(-t) - np.exp(t)


def warren_hessian(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    x, y, t = X[..., 0], X[..., 1], X[..., 2]
    e, em = np.exp(t), np.exp(-t)
    H = np.zeros(X.shape[:-1] + (3, 3))
    H[..., 0, 0] = 2 * e
    H[..., 1, 1] = 2 * e
    H[..., 0, 2] = H[..., 2, 0] = 2 * x * e
    H[..., 1, 2] = H[..., 2, 1] = 2 * y * e
    H[..., 2, 2] = (x * x + y * y) * e + 0.25 * em - e
    return H


def warren() -> Candidate:
    return Candidate("warren", 3, warren_value, warren_hessian)


BASES = {"quad": quad, "quad_bump": quad_bump, "warren": lambda n=3: warren()}


def _fd_hessian(fun: Callable, X: np.ndarray, h: float) -> np.ndarray:
    """Central-difference Hessian of a closed-form function at points X (k, n)."""
    n = X.shape[-1]
    H = np.empty(X.shape[:-1] + (n, n))
    E = np.eye(n) * h
    f0 = fun(X)
    for i in range(n):
        H[..., i, i] = (fun(X + E[i]) - 2 * f0 + fun(X - E[i])) / (h * h)
        for j in range(i + 1, n):
            v = (fun(X + E[i] + E[j]) - fun(X + E[i] - E[j]) - fun(X - E[i] + E[j])
                 + fun(X - E[i] - E[j])) / (4 * h * h)
            H[..., i, j] = H[..., j, i] = v
    return H


# -- growth ----------------------------------------------------------------------------

@dataclass(frozen=True)
class GrowthFit:
    b: float
    c: float
    R: float = 1.0

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError("GrowthFit.b must be positive")


@dataclass(frozen=True)
class GrowthResult:
    holds: bool
    fit: GrowthFit
    witness: Optional[tuple] = None
    value: Optional[float] = None  # u at the witness
    bound: Optional[float] = None  # b|x|^2 - c at the witness
    checked: int = 0

    def to_dict(self):
        return {"holds": self.holds, "fit": self.fit.__dict__, "witness": self.witness,
                "value": self.value, "bound": self.bound, "checked": self.checked}


def growth_points(n: int, r_max: float = 50.0, seed: int = 0, rays: int = 200,
                  shells: int = 64, per_shell: int = 64) -> np.ndarray:
    """Points on +-axis rays (radii geometric in [1, r_max]) plus seeded random shells."""
    radii = np.geomspace(1.0, r_max, rays)
    pts = [s * r * e for e in np.eye(n) for s in (1.0, -1.0) for r in radii]
    rng = np.random.default_rng(seed)
    for r in np.geomspace(1.0, r_max, shells):
        d = rng.standard_normal((per_shell, n))
        pts.extend(r * d / np.linalg.norm(d, axis=1, keepdims=True))
    return np.asarray(pts)


def growth_check(u: Union[Callable, FieldLike], fit: GrowthFit, points: Optional[np.ndarray] = None,
                 n: Optional[int] = None, r_max: float = 50.0, seed: int = 0) -> GrowthResult:
    """Test u(x) >= b|x|^2 - c at sampled x with |x| >= R.

    ``u`` is a closed-form callable (sampled on axis rays and random shells)
    or a grid field (sampled at its nodes).  The first failing point in
    sample order is returned as the witness.
    """
    if isinstance(u, (SolveReport, ScalarField)):
        f = _field(u)
        X = f.domain.mesh().reshape(-1, f.domain.n)
        vals = f.values.ravel()
    else:
        if points is None:
            if n is None:
                n = getattr(u, "n", None)
            if n is None:
                raise ValueError("dimension n is required for a bare callable")
            points = growth_points(n, max(r_max, fit.R), seed)
        X = np.asarray(points, dtype=float)
        with np.errstate(over="ignore", invalid="ignore"):
            vals = np.asarray(u(X), dtype=float)
    r2 = np.sum(X * X, axis=-1)
    sel = r2 >= fit.R ** 2
    bound = fit.b * r2 - fit.c
    fail = sel & ~(vals >= bound)
    if fail.any():
        k = int(np.argmax(fail))
        return GrowthResult(False, fit, tuple(float(v) for v in X[k]), float(vals[k]), float(bound[k]),
                            int(sel.sum()))
    return GrowthResult(True, fit, checked=int(sel.sum()))


# -- Warren ------------------------------------------------------------------------

@dataclass(frozen=True)
class WarrenReport:
    count: int
    seed: int
    box: tuple
    max_abs_residual: float
    gamma2_all: bool
    min_sigma1: float
    fd_max_rel_error: float
    fd_points: int
    growth: tuple  # GrowthResult per fitted b
    tol: float = 1e-10

    @property
    def growth_violated_all(self) -> bool:
        return all(not g.holds for g in self.growth)

    @property
    def passed(self) -> bool:
        return (self.max_abs_residual <= self.tol and self.gamma2_all and self.growth_violated_all
                and self.fd_max_rel_error <= 1e-5)

    def to_dict(self):
        return {"schema_version": SCHEMA_VERSION, "count": self.count, "seed": self.seed,
                "box": list(self.box), "max_abs_residual": self.max_abs_residual,
                "gamma2_all": self.gamma2_all, "min_sigma1": self.min_sigma1,
                "fd_max_rel_error": self.fd_max_rel_error, "fd_points": self.fd_points,
                "growth": [g.to_dict() for g in self.growth],
                "growth_violated_all": self.growth_violated_all, "tol": self.tol,
                "passed": self.passed}


def _t_axis_witness(fit: GrowthFit, t_max: float = 200.0) -> GrowthResult:
    pts = np.zeros((4000, 3))
    pts[:, 2] = np.linspace(max(fit.R, 1.0), t_max, 4000)
    return growth_check(warren_value, fit, points=pts)


def warren_validate(count: int = 1000, seed: int = 7, box=(-3.0, 3.0),
                    b_grid: Sequence[float] = tuple(np.geomspace(1e-3, 10.0, 9)),
                    tol: float = 1e-10) -> WarrenReport:
    """Check the explicit non-quadratic 2-convex solution at seeded points.

    For each b in ``b_grid`` the growth constant c is fitted as the smallest
    value making u >= b|x|^2 - c hold on the sample itself; a t-axis point
    then violates the fitted bound.
    """
    lo, hi = float(box[0]), float(box[1])
    rng = np.random.default_rng(seed)
    X = rng.uniform(lo, hi, (count, 3))
    H = warren_hessian(X)
    res = sigma2_batch(H) - 1.0
    s1 = sigma1_batch(H)
    g2 = gamma2_mask(H)
    fd_X = X[:10]
    H_fd = _fd_hessian(warren_value, fd_X, 1e-4)
    fd_err = float(np.max(np.abs(H_fd - H[:10]) / (1.0 + np.abs(H[:10]))))
    u = warren_value(X)
    r2 = np.sum(X * X, axis=1)
    growth = []
    for b in b_grid:
        c = float(np.max(b * r2 - u))
        growth.append(_t_axis_witness(GrowthFit(float(b), c, 1.0)))
    return WarrenReport(count=count, seed=seed, box=(lo, hi), max_abs_residual=float(np.abs(res).max()),
                        gamma2_all=bool(g2.all()), min_sigma1=float(s1.min()),
                        fd_max_rel_error=fd_err, fd_points=len(fd_X), growth=tuple(growth), tol=tol)


# -- rescaling --------------------------------------------------------------------

@dataclass(frozen=True)
class RescaleSpec:
    base: Candidate
    R_list: tuple
    A: float = 0.0

    def __post_init__(self):
        R = tuple(float(r) for r in self.R_list)
        if not R:
            raise ValueError("R_list is empty")
        if R[0] < 1 or any(b <= a for a, b in zip(R, R[1:])):
            raise ValueError("R_list must be strictly increasing and >= 1")
        object.__setattr__(self, "R_list", R)


@dataclass(frozen=True)
class RescaleRow:
    R: float
    sup_hess: float  # sup |D^2 u_R| (spectral) over Omega'_R
    osc: float  # max pairwise Frobenius distance of D^2 u_R over the inner half-box
    pog_quantity: float  # max over Omega_R of (-u_R)^alpha max{|D^2 u_R|, 1}
    nodes_in_mask: int  # nodes of Omega'_R
    nodes_in_domain: int  # nodes of Omega_R
    identity_error: float  # max |D^2_y u_R - D^2_x u(R y)| (both discrete)
    closed_form_error: float  # max |D^2_y u_R - closed-form D^2 u(R y)| over Omega'_R
    min_sigma3: float  # over Omega'_R (closed form)
    bbox: tuple


@dataclass(frozen=True)
class RescaleReport:
    base: str
    A: float
    m: int
    rows: tuple

    def osc_non_increasing(self, slack: float = 0.1) -> bool:
        return all(b.osc <= a.osc * (1.0 + slack) + 1e-12 for a, b in zip(self.rows, self.rows[1:]))

    def sup_hess_spread(self) -> float:
        s = [r.sup_hess for r in self.rows]
        return max(s) - min(s)

    def to_dict(self):
        return {"schema_version": SCHEMA_VERSION, "base": self.base, "A": self.A, "m": self.m,
                "rows": [r.__dict__ for r in self.rows],
                "osc_non_increasing": self.osc_non_increasing(),
                "sup_hess_spread": self.sup_hess_spread(),
                "note": "supporting evidence only; rigidity of entire solutions is not decidable on a grid"}

    def write_csv(self, path):
        return write_csv(path, ["R", "sup_hess", "osc", "pog_quantity", "nodes_in_mask"],
                         [(r.R, r.sup_hess, r.osc, r.pog_quantity, r.nodes_in_mask) for r in self.rows])


def _max_pairwise(H: np.ndarray, chunk: int = 2048) -> float:
    """Max Frobenius distance between any two matrices in the stack.

    Centering first keeps the Gram-matrix expansion accurate when all the
    matrices are nearly equal.
    """
    V = H.reshape(len(H), -1)
    V = V - V.mean(axis=0)
    sq = np.sum(V * V, axis=1)
    best = 0.0
    for s in range(0, len(V), chunk):
        d2 = sq[s:s + chunk, None] + sq[None, :] - 2.0 * V[s:s + chunk] @ V.T
        best = max(best, float(d2.max()))
    return math.sqrt(max(best, 0.0))


def _hess_grid(fun: Callable, axes: list) -> np.ndarray:
    X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    h = axes[0][1] - axes[0][0]
    return hessian_field(fun(X), h), X[(slice(1, -1),) * len(axes)]


def rescale_family(spec: RescaleSpec, m: int = 41, search_half_width: float = 4.0,
                   pog: PogorelovConfig = PogorelovConfig()) -> RescaleReport:
    """Rescalings u_R(y) = (u(Ry) - R^2) / R^2 sampled on a fixed grid over the bounding box of Omega_R.

    Omega_R = {u_R < 0} is located on a coarse grid over the search cube
    [-L, L]^n.  Hessians of u_R come from grid differences, so at fixed m the
    oscillation of a fixed-size bump shrinks once it drops below the grid
    scale; that is the quantity recorded.

    Raises
    ------
    ProbeError
        Omega_R is empty, or touches the search cube (unbounded within the
        sampled box, i.e. no quadratic growth).
    """
    if m < 9:
        raise ValueError("m must be >= 9")
    base = spec.base
    n = base.n
    L = float(search_half_width)
    rows = []
    for R in spec.R_list:
        def uR(Y, R=R):
            with np.errstate(over="ignore", invalid="ignore"):
                return (base(R * Y) - R * R) / (R * R)

        coarse = np.linspace(-L, L, 2 * m + 1)
        Yc = np.stack(np.meshgrid(*([coarse] * n), indexing="ij"), axis=-1)
        inside = uR(Yc) < 0
        if not inside.any():
            raise ProbeError(f"Omega_R empty at R={R}")
        edge = np.ones(inside.shape, dtype=bool)
        edge[(slice(1, -1),) * n] = False
        if (inside & edge).any():
            raise ProbeError(f"Omega_R touches the search box [-{L}, {L}]^{n} at R={R}: "
                             "sublevel set unbounded in the sample (no quadratic growth)")
        step = coarse[1] - coarse[0]
        pts = Yc[inside]
        lo, hi = pts.min(axis=0) - step, pts.max(axis=0) + step
        half = float(np.max(hi - lo)) / 2.0
        ctr = (lo + hi) / 2.0
        axes = [np.linspace(c - half, c + half, m) for c in ctr]
        Hy, Y = _hess_grid(uR, axes)
        # same stencil on u at spacing R h: identity holds up to rounding
        Hx, _ = _hess_grid(base, [R * a for a in axes])
        vals = uR(Y)
        omega = vals < 0
        mask = vals <= -0.5
        if not mask.any():
            raise ProbeError(f"Omega'_R empty at R={R}")
        norm = _spectral_norm(Hy)
        H_cf = base.hessian(R * Y)
        inner = np.all(np.abs(Y - ctr) <= half / 2.0, axis=-1)
        w = np.where(omega, -vals, 0.0) ** pog.alpha
        rows.append(RescaleRow(
            R=R,
            sup_hess=float(norm[mask].max()),
            osc=_max_pairwise(Hy[inner]),
            pog_quantity=float((w * np.maximum(norm, 1.0))[omega].max()),
            nodes_in_mask=int(mask.sum()),
            nodes_in_domain=int(omega.sum()),
            identity_error=float(np.abs(Hy - Hx).max()),
            closed_form_error=float(np.abs(Hy - H_cf)[mask].max()),
            min_sigma3=float(sigma3_batch(H_cf[mask]).min()) if n >= 3 else float("nan"),
            bbox=(tuple(float(c - half) for c in ctr), tuple(float(c + half) for c in ctr)),
        ))
    return RescaleReport(base=base.name, A=float(spec.A), m=m, rows=tuple(rows))


# -- special Lagrangian phase -----------------------------------------------------------

PHASE_TOL = 1e-10
PRODUCT_RTOL = 1e-12


def sl_phase(lam) -> float:
    """Sum of arctangents of the eigenvalues, in radians."""
    v = lam.values if hasattr(lam, "values") else lam
    return float(np.sum(np.arctan(np.asarray(v, dtype=float))))


@dataclass(frozen=True)
class PhaseReport:
    count: int
    seed: int
    max_phase_error: float
    phase_violations: int
    max_re_error: float  # |Re prod(1 + i lam) - (1 - sigma_2)| / modulus
    max_im_error: float  # |Im prod(1 + i lam) - (sigma_1 - sigma_3)| / modulus
    min_im: float
    attempts: int
    control_phase: float
    control_excluded: bool

    @property
    def passed(self) -> bool:
        return (self.phase_violations == 0 and self.max_re_error <= PRODUCT_RTOL
                and self.max_im_error <= PRODUCT_RTOL and self.min_im > 0 and self.control_excluded)

    def to_dict(self):
        d = dict(self.__dict__)
        d.update(schema_version=SCHEMA_VERSION, passed=self.passed, phase_tol=PHASE_TOL,
                 product_rtol=PRODUCT_RTOL)
        return d


def phase_identity_check(count: int = 10_000, seed: int = 7, n: int = 3) -> PhaseReport:
    """Sigma_2 = 1 in Gamma_2 (n = 3) against phase pi/2 and the complex product identity.

    The product errors are relative to prod |1 + i lambda_k|, the natural
    scale of its rounding error.
    """
    if n != 3:
        raise DomainError("the phase identity probe is for n = 3")
    parts, attempts, c = [], 0, 0
    got = 0
    while got < count:
        lam, ok, _ = sampling.unit_sigma2_spectra_3(sampling.chunk_rng(seed, c), 1 << 14)
        c += 1
        acc = np.cumsum(ok)
        need = count - got
        cut = len(ok) if acc[-1] < need else int(np.searchsorted(acc, need)) + 1
        attempts += cut
        parts.append(lam[:cut][ok[:cut]])
        got += int(ok[:cut].sum())
        if got / attempts < 1e-3:
            raise sampling.SamplerStarvation("sigma2_unit", got, attempts)
    lam = np.concatenate(parts)
    phase = np.sum(np.arctan(lam), axis=1)
    err = np.abs(phase - math.pi / 2)
    prod = np.prod(1.0 + 1j * lam, axis=1)
    mod = np.prod(np.sqrt(1.0 + lam * lam), axis=1)
    e = sigma_all_batch(lam, 3)
    re_err = np.abs(prod.real - (1.0 - e[:, 2])) / mod
    im_err = np.abs(prod.imag - (e[:, 1] - e[:, 3])) / mod
    control = np.array([1.0, 1.0, 0.5])  # sigma_2 = 2
    cphase = sl_phase(control)
    return PhaseReport(
        count=len(lam), seed=seed,
        max_phase_error=float(err.max()), phase_violations=int(np.sum(err > PHASE_TOL)),
        max_re_error=float(re_err.max()), max_im_error=float(im_err.max()),
        min_im=float(prod.imag.min()), attempts=attempts,
        control_phase=cphase, control_excluded=abs(cphase - math.pi / 2) > PHASE_TOL,
    )


# -- differentiated equation ------------------------------------------------------------

@dataclass(frozen=True)
class DiffEqReport:
    h: float
    nodes: int
    first: tuple  # max |sigma_2^{ij} u_ijk| per k
    second: tuple  # max |sigma_2^{ij} u_ijkk + (tr U_k)^2 - tr(U_k^2)| per k

    @property
    def first_max(self) -> float:
        return max(self.first)

    @property
    def second_max(self) -> float:
        return max(self.second)

    def to_dict(self):
        return {"schema_version": SCHEMA_VERSION, "h": self.h, "nodes": self.nodes,
                "first": list(self.first), "second": list(self.second),
                "first_max": self.first_max, "second_max": self.second_max}


def differentiated_equation_residual(rep: FieldLike) -> DiffEqReport:
    """Once- and twice-differentiated equation residuals over the inner half-box.

    Third and fourth derivatives are centered differences of the discrete
    Hessians.  The second identity uses the exact second derivative of
    sigma_2: d^2 sigma_2 [X, X] = (tr X)^2 - tr(X^2).
    """
    f = _field(rep)
    dom = f.domain
    if dom.m < 9:
        raise ValueError("need m >= 9 for third differences")
    n, h = dom.n, dom.h
    H = hessian_field(f.values, h)  # interior index j <-> grid index j + 1
    G = sigma2_gradient_batch(H)
    X = dom.mesh()[(slice(1, -1),) * n]
    ctr = (np.asarray(dom.lo) + np.asarray(dom.hi)) / 2.0
    halfw = (dom.hi[0] - dom.lo[0]) / 4.0
    inner = np.all(np.abs(X - ctr) <= halfw + 1e-12 * halfw, axis=-1)
    core = np.zeros(inner.shape, dtype=bool)
    core[(slice(1, -1),) * n] = True
    sel = inner & core
    if not sel.any():
        raise ValueError("no deep-interior nodes")
    first, second = [], []
    for k in range(n):
        up = np.roll(H, -1, axis=k)
        dn = np.roll(H, 1, axis=k)
        Uk = (up - dn) / (2 * h)
        Ukk = (up - 2 * H + dn) / (h * h)
        r1 = np.einsum("...ij,...ij->...", G, Uk)
        tr = np.trace(Uk, axis1=-2, axis2=-1)
        r2 = np.einsum("...ij,...ij->...", G, Ukk) + tr * tr - np.einsum("...ij,...ji->...", Uk, Uk)
        first.append(float(np.abs(r1[sel]).max()))
        second.append(float(np.abs(r2[sel]).max()))
    return DiffEqReport(h=h, nodes=int(sel.sum()), first=tuple(first), second=tuple(second))
