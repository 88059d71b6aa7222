"""Cycle and energy model of one bit-serial correlation on the array.

A unit operation processes W_P weight bitplanes; each plane costs one
MAV cycle plus 2*A_P conversion cycles:

    cycles = W_P * (1 + 2*A_P)

Energy per plane: the MAV precharges all M product lines
(M*C_PL*V_PCH^2), the conversion charges reference subsets of
2^i lines over the A_P steps (sum 2^i*C_PL*V_PCH^2) and runs the
comparator and SA register logic A_P times (E_C + E_SAR each), and
leakage accrues per clock cycle.

Absolute joule values for the comparator/SAR terms are not derivable at
desk scale; calibrate_energy_params solves them from the measured
energy split (MAV / digitization / leakage fractions) at a reference
operating point, preserving every ratio the split implies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import Model, evaluate

__all__ = [
    "CostParams", "CostBreakdown", "cycle_count", "energy_breakdown",
    "calibrate_energy_params", "dse_sweep", "tops_per_watt",
    "SWEEP_CSV_HEADER",
]

SWEEP_CSV_HEADER = "W_P,A_P,cycles,E_total,frac_mav,frac_digitize,frac_leak,accuracy"

# silicon-measured operating constants; not desk-reproducible, used as
# calibration targets and projection inputs
MEASURED_ENERGY_SPLIT = (0.44, 0.55, 0.01)   # MAV / digitization / leakage
HOLD_VOLTAGE_V = 0.4
WORST_CASE_DISCHARGE_TIME_S = 50e-12
ARRAY_LEAKAGE_POWER_W = 0.97e-9
ARRAY_ACTIVE_POWER_W = 7.6e-6
SILICON_TOPS_PER_WATT = {"8x62": 105.0, "8x30": 84.0}
DIGITAL_TOPS_PER_WATT = 2.8


@dataclass(frozen=True)
class CostParams:
    c_pl: float = 1.0              # product-line capacitance (incl. 20% interconnect)
    v_pch: float = 1.0             # precharge voltage
    e_comparator: float = 0.775    # per comparator decision
    e_sar: float = 0.775           # per SA register update
    columns_per_half: int = 31     # M
    leak_per_cycle: float = 0.0064 # leakage charge per clock
    clock_hz: float = 1e9

    def __post_init__(self):
        if min(self.c_pl, self.v_pch, self.clock_hz) <= 0:
            raise ValueError("c_pl, v_pch and clock must be positive")
        if min(self.e_comparator, self.e_sar, self.leak_per_cycle) < 0:
            raise ValueError("energy terms must be non-negative")

    @property
    def unit(self) -> float:
        """One product line's charge energy, C_PL * V_PCH^2."""
        return self.c_pl * self.v_pch ** 2


@dataclass(frozen=True)
class CostBreakdown:
    cycles: int
    e_mav: float
    e_dac: float
    e_comp_sar: float
    e_leak: float

    @property
    def total(self) -> float:
        return self.e_mav + self.e_dac + self.e_comp_sar + self.e_leak

    @property
    def frac_mav(self) -> float:
        return self.e_mav / self.total

    @property
    def frac_digitize(self) -> float:
        # capacitive DAC + comparator + SAR logic
        return (self.e_dac + self.e_comp_sar) / self.total

    @property
    def frac_leak(self) -> float:
        return self.e_leak / self.total

    @property
    def fractions(self):
        return self.frac_mav, self.frac_digitize, self.frac_leak


def cycle_count(w_p: int, a_p: int) -> int:
    """Clock cycles for one unit operation of W_P planes at A_P ADC bits."""
    if w_p < 1 or a_p < 1:
        raise ValueError("w_p and a_p must be >= 1")
    return w_p * (1 + 2 * a_p)


def energy_breakdown(w_p: int, a_p: int, params: CostParams) -> CostBreakdown:
    cycles = cycle_count(w_p, a_p)
    unit = params.unit
    e_mav = w_p * params.columns_per_half * unit
    e_dac = w_p * ((1 << a_p) - 1) * unit          # sum_{i<A_P} 2^i
    e_comp_sar = w_p * a_p * (params.e_comparator + params.e_sar)
    e_leak = cycles * params.leak_per_cycle
    return CostBreakdown(cycles=cycles, e_mav=e_mav, e_dac=e_dac,
                         e_comp_sar=e_comp_sar, e_leak=e_leak)


def calibrate_energy_params(targets=MEASURED_ENERGY_SPLIT, w_p=8, a_p=5,
                            columns_per_half=31, c_pl=1.0, v_pch=1.0,
                            clock_hz=1e9) -> CostParams:
    """Solve comparator/SAR and leakage energies from a measured split.

    targets = (frac_mav, frac_digitize, frac_leak) at the reference
    operating point; they are normalized to sum to one.  The MAV and DAC
    terms are fixed by geometry, so the digitization target determines
    E_C + E_SAR and the leakage target the per-cycle loss.  Splits that
    would need a negative comparator/SAR energy are infeasible.
    """
    f = np.asarray(targets, dtype=np.float64)
    if f.min() < 0 or f.sum() <= 0 or f.sum() > 1 + 1e-9:
        raise ValueError("fractions must be non-negative and sum to at most 1")
    f = f / f.sum()
    f_mav, f_dig, f_leak = f
    if f_mav <= 0:
        raise ValueError("MAV fraction must be positive")
    unit = c_pl * v_pch ** 2
    per_plane_total = columns_per_half * unit / f_mav
    e_pair = (f_dig * per_plane_total - ((1 << a_p) - 1) * unit) / a_p
    if e_pair < -1e-9 * unit:
        raise ValueError(
            f"infeasible split: digitization fraction {f_dig:.3f} is below "
            f"the capacitive DAC floor at A_P={a_p}, M={columns_per_half}")
    e_pair = max(e_pair, 0.0)
    leak_per_cycle = f_leak * per_plane_total / (1 + 2 * a_p)
    return CostParams(c_pl=c_pl, v_pch=v_pch, e_comparator=e_pair / 2,
                      e_sar=e_pair / 2, columns_per_half=columns_per_half,
                      leak_per_cycle=leak_per_cycle, clock_hz=clock_hz)


def tops_per_watt(w_p: int, a_p: int, params: CostParams,
                  ops_per_column_cycle: int = 2) -> float:
    """Throughput per power from the energy model.

    Each MAV cycle performs one 1b x multibit product and its
    accumulation on every column, counted as 2 ops by convention
    (configurable, since the figure is convention-dependent).
    """
    energy = energy_breakdown(w_p, a_p, params).total
    if energy <= 0:
        raise ValueError("total energy must be positive")
    ops = w_p * params.columns_per_half * ops_per_column_cycle
    return ops / energy / 1e12


def dse_sweep(wp_values, ap_values, params: CostParams, model: Model = None,
              data=None, m_bits: int = 7, adc_columns: int = 31):
    """Latency/energy/accuracy surface over weight and ADC precision.

    Accuracy evaluates the model through the fixed-point path with the
    lowest (m_bits+1-W_P) weight bitplanes skipped and every bitplane
    count decoded at A_P bits; it needs a trained model and a sample,
    otherwise the column is left as NaN.
    """
    rows = []
    for w_p in wp_values:
        for a_p in ap_values:
            bd = energy_breakdown(w_p, a_p, params)
            acc = float("nan")
            if model is not None and data is not None:
                skip = max(0, m_bits + 1 - w_p)
                # data arrives preprocessed; evaluate must not re-center
                acc = evaluate(model, data, quantization=m_bits,
                               adc=(adc_columns, a_p), weight_lsb_skip=skip,
                               center=False)
            rows.append({
                "W_P": w_p, "A_P": a_p, "cycles": bd.cycles,
                "E_total": bd.total, "frac_mav": bd.frac_mav,
                "frac_digitize": bd.frac_digitize, "frac_leak": bd.frac_leak,
                "accuracy": acc,
            })
    return rows


def sweep_rows_to_csv(rows) -> str:
    lines = [SWEEP_CSV_HEADER]
    for r in rows:
        acc = "" if np.isnan(r["accuracy"]) else f"{r['accuracy']:.6f}"
        lines.append(f"{r['W_P']},{r['A_P']},{r['cycles']},{r['E_total']:.9g},"
                     f"{r['frac_mav']:.9g},{r['frac_digitize']:.9g},"
                     f"{r['frac_leak']:.9g},{acc}")
    return "\n".join(lines) + "\n"
