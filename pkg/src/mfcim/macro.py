"""Behavioral simulator of the compute-in-SRAM micro-array.

One micro-array stores a weight channel bit-serially: a step row plus
`magnitude_bits` magnitude bitplanes laid across up to M columns of one
half.  A compute cycle activates one stored row against the gate bits
held on the serial channel; every column whose cell bit AND gate bit are
both one discharges its product line.  The discharge count k is read as
a charge average over the M product lines plus one dummy line held
charged:

    v = V_PCH * (sum of charged line capacitance) / (sum over all M+1 lines)

which is V_PCH*(M+1-k)/(M+1) with nominal capacitors.  The opposite half
then digitizes v with a successive-approximation search against a
mid-rise reference grid

    r(c) = V_PCH * (1 - (c + 0.5) / 2**adc_bits),   c in [0, 2**adc_bits)

realized by charge-averaging subsets of its own product lines, so that a
config with 2**adc_bits >= M+1 decodes every count exactly.  One MAV
cycle plus the 2*adc_bits conversion cycles give 1 + 2*A_P compute
cycles per bitplane.

Serial input loads cost one io cycle per bit and are tracked separately
from compute cycles; stitched arrays receive their gate bits from the
upstream array and pay nothing.

Columns flagged as discarded (see mfcim.variability) hold all-ones cells
with their column line forced on, so they discharge every cycle; the
digital controller subtracts the discard count from each decoded plane.
Discarded columns never gate reference generation because the ADC half
does not activate stored rows.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .operator import QuantTensor, bitplane_decompose

__all__ = [
    "MuArrayConfig",
    "MuArrayInstance",
    "CycleLedger",
    "PlaneRecord",
    "ConversionTrace",
    "StitchedGroup",
    "ideal_decode",
    "stitch",
    "trace_to_csv",
]

TRACE_CSV_HEADER = "phase,plane,k,v,code,k_hat,compute_cycles"


@dataclass(frozen=True)
class MuArrayConfig:
    """Geometry and conversion precision of one micro-array."""

    columns_per_half: int = 31     # M
    magnitude_bits: int = 7        # stored magnitude planes per operand
    adc_bits: int = 5              # A_P
    v_pch: float = 1.0             # precharge voltage, volts
    c_pl: float = 1.0              # nominal product-line capacitance
                                   # (interconnect uplift already included)

    def __post_init__(self):
        if self.columns_per_half < 1:
            raise ValueError("columns_per_half must be >= 1")
        if not 1 <= self.adc_bits <= 8:
            raise ValueError("adc_bits must be in [1, 8]")
        if self.magnitude_bits < 1:
            raise ValueError("magnitude_bits must be >= 1")
        if self.v_pch <= 0 or self.c_pl <= 0:
            raise ValueError("v_pch and c_pl must be positive")

    @property
    def rows_total(self) -> int:
        # step row + magnitude planes
        return 1 + self.magnitude_bits

    @property
    def lossless(self) -> bool:
        return 2 ** self.adc_bits >= self.columns_per_half + 1


@dataclass
class CycleLedger:
    compute_cycles: int = 0
    io_cycles: int = 0

    def __iadd__(self, other: "CycleLedger"):
        self.compute_cycles += other.compute_cycles
        self.io_cycles += other.io_cycles
        return self


@dataclass(frozen=True)
class PlaneRecord:
    phase: str
    plane: int
    k: int                 # effective discharge count (incl. discarded)
    v: float               # averaged sum-line level
    code: int              # final SA code
    k_hat: int             # decoded count before discard correction
    compute_cycles: int    # 1 MAV + 2*adc_bits conversion


@dataclass
class ConversionTrace:
    records: list = field(default_factory=list)
    ledger: CycleLedger = field(default_factory=CycleLedger)

    def phase_records(self, phase: str):
        return [r for r in self.records if r.phase == phase]

    def phase_compute_cycles(self, phase: str) -> int:
        return sum(r.compute_cycles for r in self.phase_records(phase))


def trace_to_csv(trace: ConversionTrace) -> str:
    """Columnar export, one row per processed bitplane."""
    buf = io.StringIO()
    buf.write(TRACE_CSV_HEADER + "\n")
    for r in trace.records:
        buf.write(f"{r.phase},{r.plane},{r.k},{r.v:.9g},{r.code},{r.k_hat},"
                  f"{r.compute_cycles}\n")
    return buf.getvalue()


def ideal_decode(k, columns_per_half: int, adc_bits: int):
    """Decoded count for an ideal (nominal, noiseless) conversion.

    Vectorized closed form of the SA search: code = smallest c with
    v(k) >= r(c), then k_hat = round((M+1)*c / 2**adc_bits).  Equal to
    the behavioral sa_convert under nominal conditions; the identity on
    k in [0, M] holds exactly when 2**adc_bits >= M+1.
    """
    k = np.asarray(k, dtype=np.int64)
    n_levels = 1 << adc_bits
    span = columns_per_half + 1
    code = np.ceil(k * n_levels / span - 0.5).astype(np.int64)
    code = np.clip(code, 0, n_levels - 1)
    k_hat = np.floor(span * code / n_levels + 0.5).astype(np.int64)
    return k_hat if k_hat.shape else int(k_hat)


class _Half:
    """Storage and product lines of one array half."""

    def __init__(self, m: int, caps: np.ndarray):
        if caps.shape != (m + 1,) or np.any(caps <= 0):
            raise ValueError("need m+1 positive capacitances (incl. dummy)")
        self.m = m
        self.caps = caps                       # [0..m-1] columns, [m] dummy
        self.step_row = None                   # (m,) uint8
        self.planes = None                     # (magnitude_bits, m) uint8
        self.width = 0
        self.sum_abs_w = 0                     # precomputed statistic
        self.discard_mask = np.zeros(m, dtype=bool)
        self.loaded_bits = np.zeros(m, dtype=np.uint8)
        self.channel = None                    # QuantTensor as programmed

    @property
    def programmed(self) -> bool:
        return self.planes is not None

    @property
    def discard_count(self) -> int:
        return int(self.discard_mask.sum())

    @property
    def live_columns(self) -> np.ndarray:
        return np.flatnonzero(~self.discard_mask)


class MuArrayInstance:
    """One micro-array with per-line capacitances and a real comparator.

    Nominal instances (MuArrayInstance.nominal) have exactly equal
    capacitors, zero comparator offset and zero noise, so every lossless
    conversion is bit-exact.  Variability-sampled instances come from
    mfcim.variability.sample_instance.
    """

    def __init__(self, config: MuArrayConfig, caps_left, caps_right,
                 comparator_offset: float = 0.0,
                 comparator_noise_sigma: float = 0.0,
                 rng: np.random.Generator | None = None,
                 reference_order: np.ndarray | None = None):
        m = config.columns_per_half
        self.config = config
        self.halves = {"left": _Half(m, np.asarray(caps_left, dtype=np.float64)),
                       "right": _Half(m, np.asarray(caps_right, dtype=np.float64))}
        self.comparator_offset = float(comparator_offset)
        self.comparator_noise_sigma = float(comparator_noise_sigma)
        self.offset_correction = 0.0
        self.rng = rng if rng is not None else np.random.default_rng(0)
        # which right-half lines charge first when building a reference level
        if reference_order is None:
            reference_order = np.arange(m + 1)
        self.reference_order = np.asarray(reference_order)
        self.ledger = CycleLedger()

    @classmethod
    def nominal(cls, config: MuArrayConfig) -> "MuArrayInstance":
        m = config.columns_per_half
        caps = np.full(m + 1, config.c_pl)
        return cls(config, caps.copy(), caps.copy())

    # -- storage ------------------------------------------------------------

    def program_weights(self, channel, half: str = "left"):
        """Write one weight channel: step row plus magnitude planes.

        The flattened channel must fit the half's live (non-discarded)
        columns; wider channels belong to the mapper, which partitions
        them across arrays.  The magnitude residue sum(abs(w)) is
        recorded as a looked-up statistic, and the all-ones dummy row is
        always available for the input residue.
        """
        h = self.halves[half]
        if isinstance(channel, QuantTensor):
            q = channel
        else:
            data = np.asarray(channel, dtype=np.int64).reshape(-1)
            q = QuantTensor(data=data, magnitude_bits=self.config.magnitude_bits,
                            scale=1.0)
        if q.magnitude_bits != self.config.magnitude_bits:
            raise ValueError("channel precision does not match array geometry")
        step, planes = bitplane_decompose(q)
        n = step.size
        live = h.live_columns
        if n > live.size:
            raise ValueError(
                f"channel width {n} exceeds {live.size} usable columns; "
                f"partition across more arrays")
        h.step_row = np.zeros(h.m, dtype=np.uint8)
        h.step_row[live[:n]] = step
        h.planes = np.zeros((self.config.magnitude_bits, h.m), dtype=np.uint8)
        h.planes[:, live[:n]] = planes
        h.width = n
        h.sum_abs_w = int(np.abs(q.data).sum())
        h.channel = q

    # -- serial channel -----------------------------------------------------

    def load_input_bits(self, bits, half: str = "left", bypass: bool = False) -> int:
        """Shift gate bits onto the channel; one io cycle per bit.

        A stitched (bypass) load reuses the upstream array's register
        chain and costs nothing.  Bits land on live columns in the same
        order the stored channel was placed.
        """
        h = self.halves[half]
        bits = np.asarray(bits).astype(np.uint8).reshape(-1)
        h.loaded_bits = self.place_bits(bits, half)
        cost = 0 if bypass else int(bits.size)
        self.ledger.io_cycles += cost
        return cost

    # -- analog core ----------------------------------------------------------

    def place_bits(self, bits, half: str = "left") -> np.ndarray:
        """Map a logical bit vector onto the half's live columns."""
        h = self.halves[half]
        bits = np.asarray(bits).astype(np.uint8).reshape(-1)
        live = h.live_columns
        if bits.size > live.size:
            raise ValueError(f"{bits.size} bits overflow {live.size} usable "
                             f"columns")
        gate = np.zeros(h.m, dtype=np.uint8)
        gate[live[:bits.size]] = bits
        return gate

    def _row_bits(self, half: str, row) -> np.ndarray:
        h = self.halves[half]
        if row == "dummy":
            return np.ones(h.m, dtype=np.uint8)
        if not h.programmed:
            raise ValueError("half has no programmed weights")
        if row == "step":
            return h.step_row
        return h.planes[int(row)]

    def mav_cycle(self, half: str, row, bits=None):
        """One product/average cycle: returns (count, level).

        count includes the forced discharges of discarded columns; the
        level is the capacitance-weighted charge average over the M
        product lines plus the dummy, which stays charged.
        """
        h = self.halves[half]
        gate = h.loaded_bits if bits is None else np.asarray(bits, dtype=np.uint8)
        if gate.size != h.m:
            raise ValueError("gate bits must span all columns")
        row_bits = self._row_bits(half, row)
        discharged = ((row_bits & gate) == 1) | h.discard_mask
        k = int(discharged.sum())
        total = h.caps.sum()
        charged = total - h.caps[:h.m][discharged].sum()   # dummy stays charged
        v = self.config.v_pch * charged / total
        self.ledger.compute_cycles += 1
        return k, v

    def _reference(self, code: int) -> float:
        """Realized reference for one SA code.

        The right half charges lines in reference_order until their
        capacitance sums to (M+1)*(1-(code+0.5)/2**adc_bits) nominal
        units; the fractional remainder uses a partial charge on the
        next line.  With equal capacitors this is exactly the ideal
        mid-rise grid.
        """
        cfg = self.config
        h = self.halves["right"]
        span = cfg.columns_per_half + 1
        weight = span * (1.0 - (code + 0.5) / (1 << cfg.adc_bits))
        order = self.reference_order
        n_full = int(weight)
        frac = weight - n_full
        caps = h.caps[order]
        charged = caps[:n_full].sum()
        if frac > 0 and n_full < caps.size:
            charged += frac * caps[n_full]
        return cfg.v_pch * charged / h.caps.sum()

    def _comparator(self, v_pos: float, v_neg: float) -> bool:
        noise = 0.0
        if self.comparator_noise_sigma > 0:
            noise = self.rng.normal(0.0, self.comparator_noise_sigma)
        offset = self.comparator_offset - self.offset_correction
        return v_pos + noise >= v_neg + offset

    def sa_convert(self, v: float):
        """Successive-approximation conversion of a sum-line level.

        Binary search over 2**adc_bits codes, MSB first; each step costs
        two clock periods (charge/average then compare/update), so a
        conversion costs 2*adc_bits compute cycles.  Returns
        (code, k_hat, decisions).
        """
        cfg = self.config
        acc = 0
        decisions = []
        for i in range(cfg.adc_bits - 1, -1, -1):
            trial = acc + (1 << i)
            ref = self._reference(trial - 1)
            above = self._comparator(v, ref)       # v >= ref: count <= trial-1
            decisions.append(above)
            if not above:
                acc = trial
        span = cfg.columns_per_half + 1
        k_hat = int(np.floor(span * acc / (1 << cfg.adc_bits) + 0.5))
        self.ledger.compute_cycles += 2 * cfg.adc_bits
        return acc, k_hat, decisions

    # -- bitplane phases ------------------------------------------------------

    def phase_accumulate(self, half: str, plane_rows, gates, phase: str = "phase",
                         trace: ConversionTrace | None = None) -> int:
        """Run MAV + conversion over bitplanes, LSB first.

        plane_rows and gates are matched sequences: each cycle ANDs one
        stored row against one gate vector.  Returns the positionally
        weighted, discard-corrected digital sum  sum_p 2**p * k_hat_p.
        """
        h = self.halves[half]
        total = 0
        for p, (row, gate) in enumerate(zip(plane_rows, gates)):
            k, v = self.mav_cycle(half, row, gate)
            code, k_hat, _ = self.sa_convert(v)
            corrected = k_hat - h.discard_count
            total += (1 << p) * corrected
            rec = PlaneRecord(phase=phase, plane=p, k=k, v=v, code=code,
                              k_hat=k_hat,
                              compute_cycles=1 + 2 * self.config.adc_bits)
            if trace is not None:
                trace.records.append(rec)
        return total

    def macro_correlate(self, w, x, half: str = "left"):
        """Full multiplication-free correlation of two integer channels.

        Three bitplane phases run on the hardware: the stored magnitude
        planes of w gated by step(x), the streamed magnitude planes of
        abs(x) gated by the stored step(w) row, and the same x planes
        gated by the all-ones dummy row for the sum(abs(x)) residue.
        sum(abs(w)) comes from the stored digital statistic.  The phase
        results combine as

            (2*A - sum|w|) + (2*B - sum|x|)

        which, with a lossless ADC and nominal conditions, equals the
        functional operator exactly.  Returns (value, trace).
        """
        if isinstance(w, QuantTensor):
            w_q = w
        else:
            w_q = QuantTensor(np.asarray(w, dtype=np.int64).reshape(-1),
                              self.config.magnitude_bits, 1.0)
        x_arr = x.data if isinstance(x, QuantTensor) else np.asarray(x, dtype=np.int64)
        x_arr = x_arr.reshape(-1)
        if x_arr.size != w_q.data.size:
            raise ValueError("operand lengths differ")
        x_q = QuantTensor(x_arr, self.config.magnitude_bits, 1.0)

        self.program_weights(w_q, half)
        h = self.halves[half]
        m_bits = self.config.magnitude_bits
        trace = ConversionTrace()
        ledger_start = CycleLedger(self.ledger.compute_cycles, self.ledger.io_cycles)

        step_x, planes_x = bitplane_decompose(x_q)

        # phase A: stored |w| planes against step(x) on the channel
        self.load_input_bits(step_x, half)
        gate_step_x = self.halves[half].loaded_bits.copy()
        a_sum = self.phase_accumulate(
            half, plane_rows=list(range(m_bits)), gates=[gate_step_x] * m_bits,
            phase="step_x_abs_w", trace=trace)

        # phase B + residue: each |x| plane is loaded once, then gated by
        # the stored step(w) row and by the dummy row without reloading
        b_sum = 0
        r_sum = 0
        gates_b = []
        for p in range(m_bits):
            self.load_input_bits(planes_x[p], half)
            gates_b.append(self.halves[half].loaded_bits.copy())
        b_sum = self.phase_accumulate(
            half, plane_rows=["step"] * m_bits, gates=gates_b,
            phase="step_w_abs_x", trace=trace)
        r_sum = self.phase_accumulate(
            half, plane_rows=["dummy"] * m_bits, gates=gates_b,
            phase="sum_abs_x", trace=trace)

        value = (2 * a_sum - h.sum_abs_w) + (2 * b_sum - r_sum)
        trace.ledger = CycleLedger(
            self.ledger.compute_cycles - ledger_start.compute_cycles,
            self.ledger.io_cycles - ledger_start.io_cycles)
        return value, trace


class StitchedGroup:
    """Micro-arrays chained on one serial channel so gate bits load once."""

    def __init__(self, arrays):
        if not arrays:
            raise ValueError("empty stitch group")
        widths = {a.config.columns_per_half for a in arrays}
        if len(widths) != 1:
            raise ValueError(f"stitched arrays must share input width, got {widths}")
        self.arrays = list(arrays)

    def load_input_bits(self, bits, half: str = "left") -> int:
        total = 0
        for i, a in enumerate(self.arrays):
            total += a.load_input_bits(bits, half, bypass=(i > 0))
        return total

    @property
    def ledger(self) -> CycleLedger:
        out = CycleLedger()
        for a in self.arrays:
            out.compute_cycles += a.ledger.compute_cycles
            out.io_cycles += a.ledger.io_cycles
        return out


def stitch(arrays) -> StitchedGroup:
    return StitchedGroup(arrays)
