"""Margin evaluation and seeded brute-force verification of the sigma_2 inequalities.

Each inequality is a vectorized kernel mapping a batch of inputs to named
``(lhs, rhs)`` parts plus per-row hypothesis flags.  The scalar ``check_*``
functions and :func:`sample_verify` both go through those kernels, so a sampled
report and a hand-built example evaluate exactly the same arithmetic.

A part *holds* when ``lhs - rhs >= -tol * (1 + |lhs| + |rhs|)``; the scaled
margin ``(lhs - rhs) / (1 + |lhs| + |rhs|)`` is what gets minimized and
compared against ``-tol``.
"""
from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import sampling
from .reporting import SCHEMA_VERSION, write_csv
from .sampling import DEFAULT_SCALE, SIGMA2_UNIT_TOL, SamplerStarvation
from .symfun import DomainError, SymTensor, Spectrum, sigma_all_batch, sigma_k_batch

TOL = 1e-9
ETA_ZERO_RTOL = 1e-10
# rounding slack for non-strict (>=) hypotheses, relative to the size of the terms
HYP_RTOL = 1e-12
CHUNK = 1 << 15
STARVATION_RATE = 1e-3

INEQUALITIES = (
    "lemma_CQ",
    "cor_third_derivative",
    "lemma_shift",
    "cor_A",
    "quadratic_form_eps",
)


# -- report types ----------------------------------------------------------------

@dataclass(frozen=True)
class MarginPart:
    name: str
    lhs: float
    rhs: float

    @property
    def margin(self) -> float:
        return self.lhs - self.rhs

    @property
    def scaled(self) -> float:
        return self.margin / (1.0 + abs(self.lhs) + abs(self.rhs))

    def holds(self, tol: float = TOL) -> bool:
        return self.scaled >= -tol

    def to_dict(self):
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "margin": self.margin}


@dataclass(frozen=True)
class MarginReport:
    """Outcome of evaluating one inequality at one input.

    ``lhs``/``rhs``/``margin`` are those of the binding part (smallest scaled
    margin).  When any hypothesis fails the report is vacuous: the margins are
    still computed and shown, but they say nothing about the lemma.
    """

    name: str
    parts: tuple[MarginPart, ...]
    hypotheses: dict
    witness: dict
    sorted_input: bool = False
    notes: dict = field(default_factory=dict)

    @property
    def binding(self) -> MarginPart:
        return min(self.parts, key=lambda p: p.scaled)

    @property
    def lhs(self) -> float:
        return self.binding.lhs

    @property
    def rhs(self) -> float:
        return self.binding.rhs

    @property
    def margin(self) -> float:
        return self.binding.margin

    @property
    def hypotheses_met(self) -> bool:
        return all(self.hypotheses.values())

    @property
    def vacuous(self) -> bool:
        return not self.hypotheses_met

    def part(self, name: str) -> MarginPart:
        for p in self.parts:
            if p.name == name:
                return p
        raise KeyError(name)

    def holds(self, tol: float = TOL) -> bool:
        return all(p.holds(tol) for p in self.parts)

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "hypotheses": dict(self.hypotheses),
            "hypotheses_met": self.hypotheses_met,
            "vacuous": self.vacuous,
            "sorted_input": self.sorted_input,
            "parts": [p.to_dict() for p in self.parts],
            "witness": self.witness,
            "notes": self.notes,
        }


@dataclass(frozen=True)
class SampleConfig:
    n: int = 3
    count: int = 10_000
    seed: int = 42
    scale_law: tuple = DEFAULT_SCALE  # log-uniform magnitude range before projection
    constraint: str = ""  # informational; each inequality fixes its own surface
    workers: int = 1

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if not 2 <= self.n <= 8:
            raise ValueError(f"n={self.n} outside [2, 8]")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class SampleReport:
    name: str
    params: dict
    n: int
    seed: int
    count: int
    tol: float
    constraint: str
    scale_law: tuple
    evaluated: int
    vacuous: int
    rejected: int
    attempts: int
    min_margin: float
    argmin_witness: dict
    violations: int
    part_min_margins: dict
    rejected_by: dict
    vacuous_by: dict
    # conclusion margins on vacuous samples: shows whether dropped hypotheses matter
    vacuous_min_margin: float
    vacuous_violations: int

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["schema_version"] = SCHEMA_VERSION
        d["passed"] = self.passed
        return d


# -- kernels -----------------------------------------------------------------------
# Each kernel gets a dict of batched inputs (rows = samples) and returns
# (parts: {name: (lhs, rhs)}, hyps: {name: bool array}, notes: {name: array}).

def _basics(L):
    e = sigma_all_batch(L, 2)
    s1, s2 = e[:, 1], e[:, 2]
    return s1, s2, (s1 > 0) & (s2 > 0)


def _kernel_cq(inp, params):
    L, xd = inp["W"], inp["xi"]
    n = L.shape[1]
    s1, s2, g2 = _basics(L)
    g = s1[:, None] - L
    eta = np.sum(g * xd, axis=1)
    tot = xd.sum(axis=1)
    lhs = -(tot * tot - np.sum(xd * xd, axis=1))
    L1, x1 = L[:, 0], xd[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        rhs = ((n - 1) / (2 * s2) * (2 * s2 * x1 - L1 * eta) ** 2
               / ((n - 1) * L1 ** 2 + 2 * (n - 2) * s2)
               - eta ** 2 / (2 * s2))
    return {"lemma": (lhs, rhs)}, {"gamma2": g2}, {"eta": eta}


def _kernel_third(inp, params):
    L, xd = inp["W"], inp["xi"]
    n = L.shape[1]
    s1, s2, g2 = _basics(L)
    g = s1[:, None] - L
    terms = g * xd
    eta = terms.sum(axis=1)
    eta_ok = np.abs(eta) <= ETA_ZERO_RTOL * (1.0 + np.abs(terms).sum(axis=1))
    tot = xd.sum(axis=1)
    lhs = -(tot * tot - np.sum(xd * xd, axis=1))
    L1, x1 = L[:, 0], xd[:, 0]
    rhs = 2 * (n - 1) * x1 ** 2 / ((n - 1) * L1 ** 2 + 2 * (n - 2))
    hyps = {"gamma2": g2, "sigma2_unit": np.abs(s2 - 1) <= SIGMA2_UNIT_TOL, "eta_zero": eta_ok}
    return {"corollary": (lhs, rhs)}, hyps, {"eta": eta}


def _shifted_sigma3(L, a):
    """sigma_3(W + aI) from the shifted spectrum, and the rounding scale sigma_3(|W + aI|)."""
    n = L.shape[1]
    if n < 3:
        z = np.zeros(L.shape[0])
        return z, z
    shifted = L + a[:, None]
    return sigma_k_batch(shifted, 3), sigma_k_batch(np.abs(shifted), 3)


def _kernel_shift(inp, params):
    L, a = inp["W"], inp["a"]
    n = L.shape[1]
    s1, s2, g2 = _basics(L)
    L1 = L[:, 0]
    s2_11 = s1 - L1
    sh3, sh3_scale = _shifted_sigma3(L, a)
    if n == 2:
        a_bound = np.ones_like(g2)
    else:
        with np.errstate(invalid="ignore"):
            a_bound = a <= np.sqrt(np.maximum(s2, 0) / (3 * (n - 1) * (n - 2)))
    c = (n - 1) * (n - 2) / 2
    mid = s2 + c * a * a
    maxabs = np.abs(L[:, 1:]).max(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = (n - 1) ** 2 * a + 7 * (n - 1) * s2 / (5 * L1)
    parts = {
        "chain_upper": (7.0 / 6.0 * s2, mid),
        "chain_lower": (mid, 5.0 / 6.0 * s2_11 * L1),
        "entry_bound": (bound, maxabs),
    }
    hyps = {
        "gamma2": g2,
        "a_nonnegative": a >= 0,
        "a_bound": a_bound,
        "shift_sigma3_nonneg": sh3 >= -HYP_RTOL * sh3_scale,
        "w11_gt_6(n-2)a": L1 > 6 * (n - 2) * a,
    }
    return parts, hyps, {"shift_sigma3": sh3}


def _kernel_cor_a(inp, params):
    L, A = inp["W"], inp["A"]
    n = L.shape[1]
    e = sigma_all_batch(L, min(3, n))
    s1, s2 = e[:, 1], e[:, 2]
    s3 = e[:, 3] if n >= 3 else np.zeros_like(s1)
    s3_scale = sigma_k_batch(np.abs(L), 3) if n >= 3 else np.zeros_like(s1)
    g2 = (s1 > 0) & (s2 > 0)
    L1 = L[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.sqrt(2 * A / (n * (n - 1) * s1))
    sh3, sh3_scale = _shifted_sigma3(L, a)
    s2_11 = s1 - L1
    maxabs = np.abs(L[:, 1:]).max(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        eq27 = (n - 1) ** 2 * a + 7 * (n - 1) / (5 * L1)
        eq27_u11 = (n - 1) ** 2 * np.sqrt(2 * A / (n * (n - 1) * L1)) + 7 * (n - 1) / (5 * L1)
        a_bound = (np.ones_like(g2) if n == 2
                   else a <= np.sqrt(np.maximum(s2, 0) / (3 * (n - 1) * (n - 2))))
    parts = {
        "eq26": (s2, 5.0 / 7.0 * s2_11 * L1),
        "eq27": (eq27, maxabs),
        "eq27_u11": (eq27_u11, maxabs),
    }
    hyps = {
        "gamma2": g2,
        "sigma2_unit": np.abs(s2 - 1) <= SIGMA2_UNIT_TOL,
        "A_nonnegative": A >= 0,
        "sigma3_lower": s3 + A >= -HYP_RTOL * (s3_scale + A),
        "u11_lower": L1 >= 6 * (n - 2) * A / n * (1 - HYP_RTOL),
        "a_bound": a_bound,
        "shift_sigma3_nonneg": sh3 >= -HYP_RTOL * sh3_scale,
        "w11_gt_6(n-2)a": L1 > 6 * (n - 2) * a,
    }
    # the printed expansion of sigma_3(W + aI); kept for comparison only
    printed = (s3 + n * a * s2 + n * (n - 1) / 2 * a * a * s1
                       + n * (n - 1) * (n - 2) / 6 * a ** 3)
    notes = {
        "a": a,
        "shift_sigma3": sh3,
        "printed_expansion": printed,
        "largeness": L1 ** 1.5 >= 6 * (n - 2) * np.sqrt(2 * A / (n * (n - 1))),
    }
    return parts, hyps, notes


def _qf_sides(L, eps):
    l1, l2, l3 = L[:, 0], L[:, 1], L[:, 2]
    s1 = l1 + l2 + l3
    e = 1.0 + eps
    A = 2 * s1 * (s1 + l3) - e * (l1 - l2) ** 2
    C = 2 * s1 * (s1 + l2) - e * (l1 - l3) ** 2
    B = 2 * s1 * l1 - e * (l2 - l1) * (l3 - l1)
    lhs_la = (((1 - eps) * l1 ** 2 + 3 + eps)
              * ((5 - eps) * l2 ** 2 + (5 - eps) * l3 ** 2 + 2 * (4 + eps) * l2 * l3 + 6)
              + ((1 - eps) * l2 ** 2 + 4 * l3 ** 2 + 3 - eps)
              * ((1 - eps) * l3 ** 2 + 4 * l2 ** 2 + 3 - eps)
              + 2 * eps * l1 * l2 * ((1 - eps) * l3 ** 2 + 4 * l2 ** 2 + 3 - eps)
              + 2 * eps * l1 * l3 * ((1 - eps) * l2 ** 2 + 4 * l3 ** 2 + 3 - eps))
    rhs_la = 4 * (2 + eps) ** 2 * l2 ** 2 * l3 ** 2 - 4 * eps ** 2 * l1 ** 2 * l2 * l3
    return A, B, C, lhs_la, rhs_la


def _kernel_qf(inp, params):
    L = inp["lam"]
    eps = params["eps"]
    s1, s2, g2 = _basics(L)
    A, B, C, lhs_la, rhs_la = _qf_sides(L, eps)
    parts = {"discriminant": (A * C, B * B), "la": (lhs_la, rhs_la)}
    hyps = {"gamma2": g2, "sigma2_unit": np.abs(s2 - 1) <= SIGMA2_UNIT_TOL}
    return parts, hyps, {"coef_221": A, "coef_331": C, "coef_cross": B}


# -- samplers ------------------------------------------------------------------

def _draw_cq(rng, cfg, size, params):
    L, ok, reason = sampling.gamma2_spectra(rng, cfg.n, size, cfg.scale_law)
    xi = sampling.signed_log_uniform(rng, (size, cfg.n), cfg.scale_law)
    return {"W": L, "xi": xi}, ok, reason


def _draw_third(rng, cfg, size, params):
    L, ok, reason = sampling.unit_sigma2_spectra(rng, cfg.n, size, cfg.scale_law)
    xi = sampling.signed_log_uniform(rng, (size, cfg.n), cfg.scale_law)
    # project xi onto the hyperplane sigma_2^{ii} xi_ii = 0
    g = L.sum(axis=1)[:, None] - L
    gg = np.sum(g * g, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where(ok, np.sum(g * xi, axis=1) / np.where(ok, gg, 1.0), 0.0)
    xi = xi - coef[:, None] * g
    return {"W": L, "xi": xi}, ok, reason


def _draw_shift(rng, cfg, size, params):
    n = cfg.n
    L, ok, reason = sampling.gamma2_spectra(rng, n, size, cfg.scale_law)
    u = 1.0 - rng.random(size)  # (0, 1]
    if n == 2:
        a = sampling.log_uniform(rng, size, cfg.scale_law)
    else:
        s2 = sigma_all_batch(L, 2)[:, 2]
        a = u * np.sqrt(np.maximum(s2, 0) / (3 * (n - 1) * (n - 2)))
    return {"W": L, "a": a}, ok, reason


def _draw_cor_a(rng, cfg, size, params):
    n = cfg.n
    L, ok, reason = sampling.unit_sigma2_spectra(rng, n, size, cfg.scale_law)
    s3 = sigma_k_batch(L, 3) if n >= 3 else np.zeros(size)
    extra = sampling.log_uniform(rng, size, cfg.scale_law) * (rng.random(size) < 0.5)
    A = np.maximum(0.0, -s3) + extra
    return {"W": L, "A": A}, ok, reason


def _draw_qf(rng, cfg, size, params):
    if cfg.n != 3:
        raise DomainError("quadratic_form_eps is an n = 3 inequality")
    L, ok, reason = sampling.unit_sigma2_spectra_3(rng, size, cfg.scale_law)
    return {"lam": L}, ok, reason


@dataclass(frozen=True)
class _Inequality:
    name: str
    constraint: str
    draw: Callable
    kernel: Callable


_REGISTRY = {
    "lemma_CQ": _Inequality("lemma_CQ", "W diagonal sorted in Gamma_2; xi arbitrary", _draw_cq, _kernel_cq),
    "cor_third_derivative": _Inequality(
        "cor_third_derivative", "sigma_2(W) = 1, W in Gamma_2; eta = 0", _draw_third, _kernel_third),
    "lemma_shift": _Inequality(
        "lemma_shift", "W diagonal sorted in Gamma_2; 0 < a <= sqrt(sigma_2/(3(n-1)(n-2)))",
        _draw_shift, _kernel_shift),
    "cor_A": _Inequality("cor_A", "sigma_2(W) = 1, W in Gamma_2; A >= max(0, -sigma_3)", _draw_cor_a, _kernel_cor_a),
    "quadratic_form_eps": _Inequality(
        "quadratic_form_eps", "n = 3, sigma_2 = 1, lambda in Gamma_2 sorted", _draw_qf, _kernel_qf),
}


def _lookup(which: str) -> _Inequality:
    try:
        return _REGISTRY[which]
    except KeyError:
        raise DomainError(f"unknown inequality {which!r}; expected one of {INEQUALITIES}") from None


# -- scalar checks -------------------------------------------------------------------

def _diag_sorted(W, extra=None):
    """Diagonal of W sorted non-increasing; ``extra`` diagonals follow the same permutation."""
    if not isinstance(W, SymTensor):
        W = SymTensor(W)
    if not W.is_diagonal():
        raise DomainError("lemma inputs are stated for diagonal W; rotate first")
    d = W.diagonal()
    order = np.argsort(-d, kind="stable")
    moved = bool(np.any(order != np.arange(len(d))))
    extra = [None if x is None else np.asarray(x, dtype=float)[order] for x in (extra or [])]
    return d[order], moved, extra


def _single(kernel, inp, params):
    parts, hyps, notes = kernel({k: np.atleast_1d(np.asarray(v, dtype=float))[None, ...]
                                 if np.ndim(v) else np.array([float(v)])
                                 for k, v in inp.items()}, params)
    parts = tuple(MarginPart(k, float(l[0]), float(r[0])) for k, (l, r) in parts.items())
    hyps = {k: bool(v[0]) for k, v in hyps.items()}
    notes = {k: (bool(v[0]) if v.dtype == bool else float(v[0])) for k, v in notes.items()}
    return parts, hyps, notes


def _xi_diag(xi, n):
    if isinstance(xi, SymTensor):
        xi = xi.entries
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 2:
        if xi.shape != (n, n):
            raise DomainError(f"xi must be {n}x{n}")
        SymTensor(xi)  # symmetry check
        return np.diag(xi).copy()
    if xi.shape != (n,):
        raise DomainError(f"xi diagonal must have length {n}")
    return xi


def check_lemma_CQ(W, xi, n: int | None = None) -> MarginReport:
    """Chen-Qiu lower bound for -sum_{i != j} xi_ii xi_jj, with eta computed from W and xi."""
    d = W.diagonal() if isinstance(W, SymTensor) else np.diag(np.asarray(W, dtype=float))
    if n is not None and n != len(d):
        raise DomainError(f"n={n} does not match W ({len(d)}x{len(d)})")
    xd = _xi_diag(xi, len(d))
    L, moved, (xd,) = _diag_sorted(W, [xd])
    parts, hyps, notes = _single(_kernel_cq, {"W": L, "xi": xd}, {})
    return MarginReport("lemma_CQ", parts, hyps, {"W": L.tolist(), "xi": xd.tolist()}, moved, notes)


def check_corollary_third_derivative(W, xi) -> MarginReport:
    """Lower bound for -sum u_ii1 u_jj1 on sigma_2 = 1 given the differentiated equation (eta = 0)."""
    d = W.diagonal() if isinstance(W, SymTensor) else np.diag(np.asarray(W, dtype=float))
    xd = _xi_diag(xi, len(d))
    L, moved, (xd,) = _diag_sorted(W, [xd])
    parts, hyps, notes = _single(_kernel_third, {"W": L, "xi": xd}, {})
    return MarginReport("cor_third_derivative", parts, hyps,
                        {"W": L.tolist(), "xi": xd.tolist()}, moved, notes)


def check_lemma_shift(W, a: float, n: int | None = None) -> MarginReport:
    """Two-sided chain for sigma_2 and the entry bound |W_jj|, given sigma_3(W + aI) >= 0.

    For n = 2 the upper bound on ``a`` is not required.
    """
    L, moved, _ = _diag_sorted(W)
    if n is not None and n != len(L):
        raise DomainError(f"n={n} does not match W")
    parts, hyps, notes = _single(_kernel_shift, {"W": L, "a": a}, {})
    return MarginReport("lemma_shift", parts, hyps, {"W": L.tolist(), "a": float(a)}, moved, notes)


def check_corollary_A(W, A: float) -> MarginReport:
    """Corollary bounds with a = sqrt(2A / (n(n-1) sigma_1)).

    sigma_3(W + aI) >= 0 is evaluated directly on the shifted spectrum.  The
    largeness condition on W_11^{3/2} is reported in ``notes`` only: it exists
    to guarantee W_11 > 6(n-2)a, which is checked directly as a hypothesis.
    """
    L, moved, _ = _diag_sorted(W)
    parts, hyps, notes = _single(_kernel_cor_a, {"W": L, "A": A}, {})
    return MarginReport("cor_A", parts, hyps, {"W": L.tolist(), "A": float(A)}, moved, notes)


def check_quadratic_form_epsilon(lam, eps: float) -> MarginReport:
    """Discriminant form and inequality (la) behind the log-Laplacian estimate, n = 3."""
    s = lam if isinstance(lam, Spectrum) else Spectrum(lam)
    if s.n != 3:
        raise DomainError("quadratic form check is for n = 3")
    v = s.sorted().as_array()
    moved = not s.is_sorted()
    parts, hyps, notes = _single(_kernel_qf, {"lam": v}, {"eps": float(eps)})
    return MarginReport("quadratic_form_eps", parts, hyps,
                        {"lam": v.tolist(), "eps": float(eps)}, moved, notes)


# -- sampling driver ---------------------------------------------------------------

@dataclass
class _ChunkResult:
    status: np.ndarray  # 0 rejected, 1 vacuous, 2 checked (per attempt)
    scaled: np.ndarray  # per-attempt min scaled margin over parts (nan when rejected)
    part_scaled: dict
    inputs: dict
    reason: np.ndarray


def _run_chunk(ineq: _Inequality, cfg: SampleConfig, params: dict, c: int) -> _ChunkResult:
    rng = sampling.chunk_rng(cfg.seed, c)
    inp, ok, reason = ineq.draw(rng, cfg, CHUNK, params)
    idx = np.nonzero(ok)[0]
    sub = {k: v[idx] for k, v in inp.items()}
    with np.errstate(all="ignore"):
        parts, hyps, _ = ineq.kernel(sub, params)
    met = np.ones(len(idx), dtype=bool)
    reason = reason.astype(object)
    for hname, hv in hyps.items():
        fail = met & ~hv
        reason[idx[fail]] = hname
        met &= hv
    status = np.zeros(CHUNK, dtype=np.int8)
    status[idx] = np.where(met, 2, 1)
    scaled = np.full(CHUNK, np.nan)
    part_scaled = {}
    mins = None
    for pname, (lhs, rhs) in parts.items():
        with np.errstate(all="ignore"):
            sc = (lhs - rhs) / (1.0 + np.abs(lhs) + np.abs(rhs))
        sc = np.where(np.isnan(sc), -np.inf, sc)
        full = np.full(CHUNK, np.nan)
        full[idx] = sc
        part_scaled[pname] = full
        mins = sc if mins is None else np.minimum(mins, sc)
    scaled[idx] = mins
    return _ChunkResult(status, scaled, part_scaled, inp, reason)


def _witness(ineq: _Inequality, res: _ChunkResult, i: int, params: dict) -> dict:
    inp = {k: v[i:i + 1] for k, v in res.inputs.items()}
    with np.errstate(all="ignore"):
        parts, hyps, notes = ineq.kernel(inp, params)
    return {
        "inputs": {k: (v[0].tolist() if v.ndim > 1 else float(v[0])) for k, v in inp.items()},
        "parts": [{"name": k, "lhs": float(l[0]), "rhs": float(r[0]), "margin": float(l[0] - r[0])}
                  for k, (l, r) in parts.items()],
        "hypotheses": {k: bool(v[0]) for k, v in hyps.items()},
        "notes": {k: (bool(v[0]) if v.dtype == bool else float(v[0])) for k, v in notes.items()},
    }


def sample_verify(which: str, cfg: SampleConfig, tol: float = TOL, **params) -> SampleReport:
    """Draw ``cfg.count`` hypothesis-satisfying inputs and record the worst scaled margin.

    The stream is cut into fixed-size chunks, each seeded from ``(seed, chunk
    index)``, so the result is independent of ``cfg.workers``.  Every attempt
    is classified exactly once as rejected (constraint surface), vacuous
    (lemma hypothesis fails) or checked.
    """
    ineq = _lookup(which)
    if which == "quadratic_form_eps":
        params.setdefault("eps", 1.0 / 25.0)
        params["eps"] = float(params["eps"])
    checked = vacuous = rejected = 0
    violations = vac_violations = 0
    best = (math.inf, None, None)  # (scaled, chunk result, index)
    vac_min = math.inf
    part_min: dict = {}
    rejected_by: dict = {}
    vacuous_by: dict = {}
    c = 0
    pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        while checked < cfg.count:
            batch = list(range(c, c + cfg.workers))
            c += cfg.workers
            if pool is None:
                results = [_run_chunk(ineq, cfg, params, b) for b in batch]
            else:
                results = list(pool.map(lambda b: _run_chunk(ineq, cfg, params, b), batch))
            for res in results:
                if checked >= cfg.count:
                    break
                cum = np.cumsum(res.status == 2)
                need = cfg.count - checked
                cut = CHUNK if cum[-1] < need else int(np.searchsorted(cum, need)) + 1
                st = res.status[:cut]
                sc = res.scaled[:cut]
                chk = st == 2
                vac = st == 1
                checked += int(chk.sum())
                vacuous += int(vac.sum())
                rejected += int((st == 0).sum())
                for r, k in zip(*np.unique(res.reason[:cut][st == 0].astype(str), return_counts=True)):
                    rejected_by[str(r)] = rejected_by.get(str(r), 0) + int(k)
                for r, k in zip(*np.unique(res.reason[:cut][vac].astype(str), return_counts=True)):
                    vacuous_by[str(r)] = vacuous_by.get(str(r), 0) + int(k)
                if chk.any():
                    masked = np.where(chk, sc, np.inf)
                    i = int(np.argmin(masked))
                    if masked[i] < best[0]:
                        best = (float(masked[i]), res, i)
                    violations += int(np.sum(sc[chk] < -tol))
                    for pname, ps in res.part_scaled.items():
                        part_min[pname] = min(part_min.get(pname, math.inf), float(ps[:cut][chk].min()))
                if vac.any():
                    vac_min = min(vac_min, float(sc[vac].min()))
                    vac_violations += int(np.sum(sc[vac] < -tol))
            attempts = checked + vacuous + rejected
            if checked < cfg.count and checked / attempts < STARVATION_RATE:
                fails = Counter(rejected_by) + Counter(vacuous_by)
                worst = fails.most_common(1)[0][0] if fails else ineq.constraint
                raise SamplerStarvation(worst, checked, attempts)
    finally:
        if pool is not None:
            pool.shutdown()
    _, res, i = best
    witness = _witness(ineq, res, i, params) if res is not None else {}
    return SampleReport(
        name=which,
        params=dict(params),
        n=cfg.n,
        seed=cfg.seed,
        count=cfg.count,
        tol=tol,
        constraint=cfg.constraint or ineq.constraint,
        scale_law=tuple(cfg.scale_law),
        evaluated=checked,
        vacuous=vacuous,
        rejected=rejected,
        attempts=checked + vacuous + rejected,
        min_margin=best[0],
        argmin_witness=witness,
        violations=violations,
        part_min_margins=part_min,
        rejected_by=rejected_by,
        vacuous_by=vacuous_by,
        vacuous_min_margin=vac_min,
        vacuous_violations=vac_violations,
    )


# -- epsilon frontier ------------------------------------------------------------

@dataclass(frozen=True)
class FrontierRow:
    eps: float
    min_margin: float  # discriminant form, scaled
    la_min_margin: float  # inequality (la), scaled
    violations: int
    evaluated: int


@dataclass(frozen=True)
class EpsilonFrontier:
    rows: tuple[FrontierRow, ...]
    seed: int
    count: int
    tol: float

    def largest_admissible(self) -> float | None:
        """Largest grid eps whose sampled discriminant margin is nonnegative (within tol)."""
        ok = [r.eps for r in self.rows if r.min_margin >= -self.tol and r.violations == 0]
        return max(ok) if ok else None

    def is_monotone(self, slack: float | None = None) -> bool:
        """Non-increasing in eps (rows sorted by eps) up to ``slack`` on both margin columns."""
        slack = self.tol if slack is None else slack
        rows = sorted(self.rows, key=lambda r: r.eps)
        return all(b.min_margin <= a.min_margin + slack and b.la_min_margin <= a.la_min_margin + slack
                   for a, b in zip(rows, rows[1:]))

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "seed": self.seed,
            "count": self.count,
            "tol": self.tol,
            "rows": [r.__dict__ for r in self.rows],
            "largest_admissible_eps": self.largest_admissible(),
            "monotone": self.is_monotone(),
        }

    def write_csv(self, path):
        return write_csv(path, ["eps", "min_margin", "la_min_margin", "violations", "evaluated"],
                         [(r.eps, r.min_margin, r.la_min_margin, r.violations, r.evaluated)
                          for r in self.rows])


def epsilon_frontier(cfg: SampleConfig, eps_grid, tol: float = TOL) -> EpsilonFrontier:
    """Sampled minimum margins of the n = 3 quadratic-form inequality over a grid of eps.

    Every grid point reuses the same seeded spectrum stream, so differences
    between rows come from eps alone.  The printed admissible window is only
    sufficient; the largest admissible grid eps is an empirical upper estimate.
    """
    grid = [float(e) for e in eps_grid]
    if not grid:
        raise DomainError("empty eps grid")
    for e in grid:
        if not 0.0 <= e <= 0.5:
            raise DomainError(f"eps={e} outside [0, 0.5]")
    rows = []
    for e in grid:
        rep = sample_verify("quadratic_form_eps", cfg, tol=tol, eps=e)
        rows.append(FrontierRow(e, rep.part_min_margins["discriminant"], rep.part_min_margins["la"],
                                rep.violations, rep.evaluated))
    return EpsilonFrontier(tuple(rows), cfg.seed, cfg.count, tol)
