"""Process variability sampling, level-crossover Monte Carlo, and the two
on-chip calibration procedures (column audit/discard, comparator offset
trim), reproduced as simulations.

Capacitor mismatch makes the charge-averaged level for a discharge count
k a random variable over the column subsets that realize k.  A
conversion is corrupted when the levels of adjacent counts invert at the
comparator.  crossover_probability estimates that probability by Monte
Carlo over array instances: each trial samples per-column capacitances,
draws a count k, and accumulates the closed-form inversion probability
of v(k) vs v(k+1) over independent random discharge subsets plus
comparator noise (a Rao-Blackwellized estimator: the subset/noise
randomness is integrated analytically, which keeps deep-tail
probabilities resolvable within a bounded trial budget).

The audit charges the sum line through one column at a time and counts
cycles to cross a threshold; smaller capacitors need more cycles, so
cycle counts rank capacitor extremity without any analog measurement.
Discarded columns are padded to all-ones so they always discharge and
only shift the common-mode denominator; the controller subtracts the
discard count digitally.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtr

from .macro import MuArrayConfig, MuArrayInstance

__all__ = [
    "VariabilityParams",
    "CrossoverResult",
    "AuditResult",
    "mismatch_sigma_rel",
    "sample_instance",
    "crossover_probability",
    "audit_columns",
    "apply_column_discard",
    "calibrate_comparator",
    "calibrate_offsets_batch",
]


def mismatch_sigma_rel(percent: float, convention: str = "3sigma") -> float:
    """Convert a quoted "+/-x%" mismatch to a Gaussian sigma/nominal ratio.

    The default reads the quoted bound as a 3-sigma extent; "sigma"
    takes it as the raw standard deviation.
    """
    if convention == "3sigma":
        return percent / 300.0
    if convention == "sigma":
        return percent / 100.0
    raise ValueError(f"unknown mismatch convention {convention!r}")


@dataclass(frozen=True)
class VariabilityParams:
    """Process spread knobs; all sampling requires an explicit seed."""

    cap_mismatch_rel: float = 0.04          # sigma_C / C per column
    global_sigma_rel: float = 0.05          # common-mode cap scale, cancels in ratios
    comparator_offset_range: float = 0.045  # volts, +/- uniform
    comparator_noise_sigma: float = 0.001   # volts

    def __post_init__(self):
        if min(self.cap_mismatch_rel, self.global_sigma_rel,
               self.comparator_offset_range, self.comparator_noise_sigma) < 0:
            raise ValueError("variability parameters must be non-negative")


def _sample_caps(rng, nominal, sigma, n):
    caps = rng.normal(nominal, sigma, n)
    bad = caps <= 0
    while np.any(bad):  # truncate: resample non-physical draws
        caps[bad] = rng.normal(nominal, sigma, int(bad.sum()))
        bad = caps <= 0
    return caps


def sample_instance(config: MuArrayConfig, params: VariabilityParams,
                    seed) -> MuArrayInstance:
    """Draw one array instance: independent per-column capacitors on each
    half, a common global scale on both halves, a uniform comparator
    offset, and a per-instance reference charging order."""
    rng = np.random.default_rng(seed)
    m = config.columns_per_half
    sigma = params.cap_mismatch_rel * config.c_pl
    caps_left = _sample_caps(rng, config.c_pl, sigma, m + 1)
    caps_right = _sample_caps(rng, config.c_pl, sigma, m + 1)
    if params.global_sigma_rel > 0:
        g = rng.normal(1.0, params.global_sigma_rel)
        while g <= 0:
            g = rng.normal(1.0, params.global_sigma_rel)
        caps_left *= g
        caps_right *= g
    offset = rng.uniform(-params.comparator_offset_range,
                         params.comparator_offset_range)
    order = rng.permutation(m + 1)
    return MuArrayInstance(config, caps_left, caps_right,
                           comparator_offset=offset,
                           comparator_noise_sigma=params.comparator_noise_sigma,
                           rng=rng, reference_order=order)


# ---------------------------------------------------------------------------
# crossover Monte Carlo
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CrossoverResult:
    p_f: float
    ci_low: float
    ci_high: float
    trials: int
    sigma_rel: float
    columns_per_half: int
    discard_fraction: float
    seed: int


def crossover_probability(config: MuArrayConfig, params: VariabilityParams,
                          trials: int, seed: int,
                          discard_fraction: float = 0.0) -> CrossoverResult:
    """Probability that adjacent-count MAV levels invert at the comparator.

    Per trial: sample an instance's product-line capacitors, optionally
    discard the most extreme columns (they then discharge in every
    cycle, common to both levels), draw a count k, and score the exact
    probability that a random k-subset level falls at or below an
    independent random (k+1)-subset level, comparator noise included.
    The estimate is the per-trial mean with a normal-approximation 95%
    interval.  Zero mismatch, offset and noise give exactly zero.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    rng = np.random.default_rng(seed)
    m = config.columns_per_half
    sigma = params.cap_mismatch_rel * config.c_pl

    caps = np.full((trials, m), config.c_pl)
    if sigma > 0:
        caps = _sample_caps(rng, config.c_pl, sigma, (trials, m))
    dummy = np.full((trials, 1), config.c_pl)
    if sigma > 0:
        dummy = _sample_caps(rng, config.c_pl, sigma, (trials, 1))

    n_discard = math.ceil(discard_fraction * m) if discard_fraction > 0 else 0
    if n_discard >= m - 1:
        raise ValueError("discard fraction leaves too few live columns")
    if n_discard:
        extremity = np.abs(caps - np.median(caps, axis=1, keepdims=True))
        order = np.argsort(-extremity, axis=1)[:, :n_discard]
        live_mask = np.ones_like(caps, dtype=bool)
        np.put_along_axis(live_mask, order, False, axis=1)
    else:
        live_mask = np.ones_like(caps, dtype=bool)

    n_live = m - n_discard
    live = caps[live_mask].reshape(trials, n_live)
    mean_live = live.mean(axis=1)
    var_live = live.var(axis=1)  # population variance of the live columns

    total = caps.sum(axis=1) + dummy[:, 0]
    # every adjacent pair (k, k+1) with k+1 <= n_live live discharges
    k = np.arange(n_live)[None, :]

    # subset-sum variance for k draws without replacement from n_live columns
    def subset_var(kk):
        if n_live == 1:
            return np.zeros((trials, 1))
        return kk * var_live[:, None] * (n_live - kk) / (n_live - 1)

    v_scale = (config.v_pch / total)[:, None]
    mu = v_scale * mean_live[:, None]
    var = v_scale ** 2 * (subset_var(k) + subset_var(k + 1)) \
        + 2.0 * params.comparator_noise_sigma ** 2
    sd = np.sqrt(var)
    with np.errstate(divide="ignore"):
        z = np.where(sd > 0, mu / np.where(sd > 0, sd, 1.0), np.inf)
    p = np.where(np.isinf(z), 0.0, ndtr(-z)).mean(axis=1)

    est = float(p.mean())
    half = 1.96 * float(p.std(ddof=1)) / math.sqrt(trials) if trials > 1 else 0.0
    return CrossoverResult(
        p_f=est, ci_low=max(0.0, est - half), ci_high=min(1.0, est + half),
        trials=trials, sigma_rel=params.cap_mismatch_rel,
        columns_per_half=m, discard_fraction=discard_fraction, seed=seed)


# ---------------------------------------------------------------------------
# column audit and discard
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AuditResult:
    cycles: np.ndarray          # charging cycles per column
    extremity_order: np.ndarray  # column indices, most extreme first
    discard_mask: np.ndarray    # columns proposed/applied for discard
    discarded_fraction: float


def charging_cycles(caps, c_sl, v_th, v_pch) -> np.ndarray:
    """Cycles for V(n+1) = (C_SL*V(n) + C_j*V_PCH)/(C_SL + C_j) from 0 to
    reach v_th; closed form of the recurrence V(n) = V_PCH*(1 - r^n) with
    r = C_SL/(C_SL + C_j)."""
    caps = np.asarray(caps, dtype=np.float64)
    ratio = c_sl / (c_sl + caps)
    return np.ceil(np.log(1.0 - v_th / v_pch) / np.log(ratio)).astype(np.int64)


def audit_columns(instance: MuArrayInstance, v_th: float, c_sl: float,
                  half: str = "left") -> AuditResult:
    """Measure per-column charging cycles and rank extremity.

    Smaller capacitors charge the sum line more slowly, so columns are
    ranked by |cycles - median(cycles)|, most extreme first.
    """
    cfg = instance.config
    if not 0 < v_th < cfg.v_pch:
        raise ValueError("threshold must lie inside (0, V_PCH)")
    caps = instance.halves[half].caps[:cfg.columns_per_half]
    cycles = charging_cycles(caps, c_sl, v_th, cfg.v_pch)
    extremity = np.abs(cycles - np.median(cycles))
    order = np.argsort(-extremity, kind="stable")
    return AuditResult(cycles=cycles, extremity_order=order,
                       discard_mask=np.zeros(cfg.columns_per_half, dtype=bool),
                       discarded_fraction=0.0)


def apply_column_discard(instance: MuArrayInstance, audit: AuditResult,
                         fraction: float | None = None,
                         cycle_threshold: float | None = None,
                         half: str = "left"):
    """Force the most extreme columns to always-discharge.

    Either a fraction of columns (worst first by audit extremity) or an
    absolute |cycles - median| threshold selects the victims.  Returns
    (updated instance copy, audit with the applied mask); discarding
    more than half the columns is rejected as degenerate.
    """
    if (fraction is None) == (cycle_threshold is None):
        raise ValueError("give exactly one of fraction, cycle_threshold")
    m = audit.cycles.size
    mask = np.zeros(m, dtype=bool)
    if fraction is not None:
        if fraction < 0:
            raise ValueError("fraction must be non-negative")
        count = math.ceil(fraction * m) if fraction > 0 else 0
        mask[audit.extremity_order[:count]] = True
    else:
        mask = np.abs(audit.cycles - np.median(audit.cycles)) > cycle_threshold
    if mask.sum() > m / 2:
        raise ValueError(
            f"discarding {int(mask.sum())}/{m} columns (> 50%) is degenerate")
    updated = copy.deepcopy(instance)
    h = updated.halves[half]
    h.discard_mask = mask
    if h.channel is not None:
        # stored weights move onto the surviving columns
        updated.program_weights(h.channel, half)
    return updated, replace(audit, discard_mask=mask,
                            discarded_fraction=float(mask.mean()))


# ---------------------------------------------------------------------------
# comparator calibration
# ---------------------------------------------------------------------------

def _correction_grid(initial_range: float, bits: int) -> np.ndarray:
    step = 2.0 * initial_range / (1 << bits)
    return -initial_range + step / 2.0 + step * np.arange(1 << bits)


def calibrate_offsets_batch(offsets, noise_sigma, trials_per_setting: int,
                            calibration_bits: int, initial_range: float,
                            seed) -> np.ndarray:
    """Vectorized metastable-point calibration over many comparators.

    Each comparator is shorted to its metastable point; for every
    candidate correction (the 2**bits grid plus the always-available
    no-correction setting) the 0/1 rate under thermal noise is estimated
    from trials_per_setting shots, and the code driving the rate closest
    to 1/2 wins.  Ties prefer the smaller correction, so calibration
    never worsens the offset.  Returns residual |offset - correction|.
    """
    if noise_sigma <= 0:
        raise ValueError("comparator bias is unobservable without noise")
    offsets = np.atleast_1d(np.asarray(offsets, dtype=np.float64))
    rng = np.random.default_rng(seed)
    grid = _correction_grid(initial_range, calibration_bits)
    candidates = np.concatenate([[0.0], grid])
    # evaluate candidates in order of ascending |correction| so argmin's
    # first-hit tie-breaking prefers small corrections
    cand_order = np.argsort(np.abs(candidates), kind="stable")
    candidates = candidates[cand_order]

    effective = offsets[:, None] - candidates[None, :]
    p_one = ndtr(-effective / noise_sigma)      # P(output=1) at metastability
    shots = rng.binomial(trials_per_setting, p_one) / trials_per_setting
    best = np.argmin(np.abs(shots - 0.5), axis=1)
    chosen = candidates[best]
    return np.abs(offsets - chosen)


def calibrate_comparator(instance: MuArrayInstance, trials_per_setting: int,
                         calibration_bits: int, seed,
                         initial_range: float = 0.045):
    """Trim one instance's comparator; returns (instance copy, residual)."""
    if instance.comparator_noise_sigma <= 0:
        raise ValueError("comparator bias is unobservable without noise")
    rng = np.random.default_rng(seed)
    grid = _correction_grid(initial_range, calibration_bits)
    candidates = np.concatenate([[0.0], grid])
    candidates = candidates[np.argsort(np.abs(candidates), kind="stable")]
    effective = instance.comparator_offset - candidates
    p_one = ndtr(-effective / instance.comparator_noise_sigma)
    shots = rng.binomial(trials_per_setting, p_one) / trials_per_setting
    best = int(np.argmin(np.abs(shots - 0.5)))
    updated = copy.deepcopy(instance)
    updated.offset_correction = float(candidates[best])
    residual = abs(instance.comparator_offset - candidates[best])
    return updated, residual
