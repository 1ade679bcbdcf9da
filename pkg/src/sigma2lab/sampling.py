"""Seeded samplers for spectra on the constraint surfaces the lemmas live on.

Every sampler takes a numpy ``Generator`` and a batch size and returns the full
batch together with a boolean ``ok`` mask; rows with ``ok == False`` were
rejected by the constraint and must not be evaluated.  Returning whole batches
(instead of filtering) keeps the attempt accounting exact.
"""
from __future__ import annotations

import numpy as np

from .symfun import sigma_all_batch

DEFAULT_SCALE = (1e-2, 1e2)
SIGMA2_UNIT_TOL = 1e-10
NEGATIVE_PROB = 0.3


class SamplerStarvation(RuntimeError):
    """Raised when almost every draw is rejected by a constraint."""

    def __init__(self, constraint: str, accepted: int, attempts: int):
        self.constraint = constraint
        self.accepted = accepted
        self.attempts = attempts
        super().__init__(
            f"sampler starved on constraint {constraint!r}: "
            f"{accepted} accepted out of {attempts} attempts"
        )


def chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    """Generator for one chunk of a seeded stream; independent of worker count."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), int(chunk)]))


def log_uniform(rng: np.random.Generator, shape, scale=DEFAULT_SCALE) -> np.ndarray:
    lo, hi = scale
    return 10.0 ** rng.uniform(np.log10(lo), np.log10(hi), shape)


def signed_log_uniform(rng, shape, scale=DEFAULT_SCALE, p_negative=0.5) -> np.ndarray:
    mag = log_uniform(rng, shape, scale)
    return np.where(rng.random(shape) < p_negative, -mag, mag)


def gamma2_spectra(rng, n: int, size: int, scale=DEFAULT_SCALE):
    """Sorted (non-increasing) spectra in Gamma_2 with log-uniform magnitudes.

    Returns ``(lam, ok, reason)`` where ``reason`` names the failed constraint
    per row ("" when accepted).
    """
    lam = signed_log_uniform(rng, (size, n), scale, NEGATIVE_PROB)
    lam = -np.sort(-lam, axis=1)
    e = sigma_all_batch(lam, 2)
    ok = (e[:, 1] > 0) & (e[:, 2] > 0)
    reason = np.where(ok, "", "gamma2")
    return lam, ok, reason


def unit_sigma2_spectra_3(rng, size: int, scale=DEFAULT_SCALE):
    """n = 3 spectra with sigma_2 = 1 in Gamma_2.

    Draw lambda_2 > 0 and a signed lambda_3, solve sigma_2 = 1 for
    lambda_1 = (1 - l2 l3) / (l2 + l3), then reject unless l1 >= l2 >= l3 and
    l2 + l3 > 0 (which together with sigma_2 = 1 puts the spectrum in Gamma_2).
    """
    l2 = log_uniform(rng, size, scale)
    l3 = signed_log_uniform(rng, size, scale)
    s = l2 + l3
    with np.errstate(divide="ignore", invalid="ignore"):
        l1 = (1.0 - l2 * l3) / s
    ok = (l2 >= l3) & (s > 0) & (l1 >= l2)
    lam = np.stack([l1, l2, l3], axis=1)
    lam = np.where(ok[:, None], lam, 0.0)
    e = sigma_all_batch(lam, 2)
    unit = np.abs(e[:, 2] - 1.0) <= SIGMA2_UNIT_TOL
    g2 = (e[:, 1] > 0) & (e[:, 2] > 0)
    reason = np.where(~ok, "order", np.where(~g2, "gamma2", np.where(~unit, "sigma2_unit", "")))
    return lam, ok & g2 & unit, reason


def unit_sigma2_spectra(rng, n: int, size: int, scale=DEFAULT_SCALE):
    """Spectra in Gamma_2 with sigma_2 = 1; n = 3 solves for lambda_1, other n rescale."""
    if n == 3:
        return unit_sigma2_spectra_3(rng, size, scale)
    lam, ok, reason = gamma2_spectra(rng, n, size, scale)
    s2 = sigma_all_batch(lam, 2)[:, 2]
    with np.errstate(invalid="ignore", divide="ignore"):
        lam = np.where(ok[:, None], lam / np.sqrt(np.where(ok, s2, 1.0))[:, None], 0.0)
    e = sigma_all_batch(lam, 2)
    unit = np.abs(e[:, 2] - 1.0) <= SIGMA2_UNIT_TOL
    reason = np.where(ok & ~unit, "sigma2_unit", reason)
    return lam, ok & unit, reason
