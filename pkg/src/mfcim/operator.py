"""Multiplication-free correlation operator and fixed-point utilities.

The operator replaces the inner product of two vectors with an l1-style
mix of signs and magnitudes:

    w (+) x = sum_i sign(x_i)*abs(w_i) + sign(w_i)*abs(x_i)

No full-precision multiply ever occurs: each term multiplies a one-bit
sign against a magnitude.  The energy-oriented decomposition rewrites
each half through step() = (sign()+1)/2 so a hardware array only has to
AND single bits against magnitude bitplanes:

    sum_i sign(w_i)*abs(x_i) = 2*sum_i step(w_i)*abs(x_i) - sum_i abs(x_i)
    sum_i sign(x_i)*abs(w_i) = 2*sum_i step(x_i)*abs(w_i) - sum_i abs(w_i)

Zero is assigned sign(0) = +1 and step(0) = 1 so that sign = 2*step - 1
holds everywhere and both forms agree exactly, including at zero.

Also here: symmetric max-abs quantization, sign/magnitude bitplane
decomposition (LSB first), and the smoothed surrogate gradients used to
train through the discontinuous sign()/delta() factors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BasisViews",
    "QuantTensor",
    "SurrogateParams",
    "DecomposedResult",
    "elementwise_basis",
    "mf_correlate",
    "mf_correlate_decomposed",
    "operand_statistic",
    "mf_neuron",
    "quantize",
    "dequantize",
    "bitplane_decompose",
    "bitplane_reconstruct",
    "smoothed_objective",
    "smoothed_gradient",
]


def _as_array(v, name="input"):
    a = np.asarray(v)
    if a.dtype.kind == "f" and not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


@dataclass(frozen=True)
class BasisViews:
    """sign/step/abs views of a vector, with sign(0)=+1, step(0)=1."""

    sign: np.ndarray   # entries in {-1, +1}
    step: np.ndarray   # entries in {0, 1}
    abs: np.ndarray    # non-negative magnitudes


@dataclass(frozen=True)
class SurrogateParams:
    """Steepness of the smoothed sign (tanh) and delta (Gaussian) factors."""

    beta: float = 10.0
    sigma: float = 0.1

    def __post_init__(self):
        if self.beta <= 0 or self.sigma <= 0:
            raise ValueError("beta and sigma must be positive")


@dataclass(frozen=True)
class DecomposedResult:
    """Correlation value plus the four partial sums of the decomposed form."""

    total: float
    step_w_dot_abs_x: float
    sum_abs_x: float
    step_x_dot_abs_w: float
    sum_abs_w: float

    @property
    def term_wx(self):
        """2*sum step(w)*abs(x) - sum abs(x)  (== sum sign(w)*abs(x))."""
        return 2 * self.step_w_dot_abs_x - self.sum_abs_x

    @property
    def term_xw(self):
        """2*sum step(x)*abs(w) - sum abs(w)  (== sum sign(x)*abs(w))."""
        return 2 * self.step_x_dot_abs_w - self.sum_abs_w


def elementwise_basis(v) -> BasisViews:
    """Decompose a vector (or QuantTensor) into sign, step and abs views."""
    if isinstance(v, QuantTensor):
        v = v.data
    a = _as_array(v)
    step = (a >= 0).astype(a.dtype if a.dtype.kind in "iu" else np.int64)
    sign = 2 * step - 1
    return BasisViews(sign=sign, step=step, abs=np.abs(a))


def mf_correlate(w, x):
    """Multiplication-free correlation of two equal-length vectors.

    Exact in integer arithmetic for integer inputs (int64 accumulation).
    """
    w = _as_array(w, "w")
    x = _as_array(x, "x")
    if w.shape != x.shape:
        raise ValueError(f"length mismatch: {w.shape} vs {x.shape}")
    if w.dtype.kind in "iu" and x.dtype.kind in "iu":
        w = w.astype(np.int64)
        x = x.astype(np.int64)
    bw, bx = elementwise_basis(w), elementwise_basis(x)
    total = np.sum(bx.sign * bw.abs + bw.sign * bx.abs)
    return total.item()


def mf_correlate_decomposed(w, x) -> DecomposedResult:
    """Correlation through the low-dynamic-energy decomposition.

    Returns the total plus all four partial sums (the two step-gated
    products and the two magnitude residues).  Always equals
    mf_correlate(w, x) exactly.
    """
    w = _as_array(w, "w")
    x = _as_array(x, "x")
    if w.shape != x.shape:
        raise ValueError(f"length mismatch: {w.shape} vs {x.shape}")
    if w.dtype.kind in "iu" and x.dtype.kind in "iu":
        w = w.astype(np.int64)
        x = x.astype(np.int64)
    bw, bx = elementwise_basis(w), elementwise_basis(x)
    swx = np.sum(bw.step * bx.abs).item()
    sxw = np.sum(bx.step * bw.abs).item()
    ax = np.sum(bx.abs).item()
    aw = np.sum(bw.abs).item()
    total = (2 * swx - ax) + (2 * sxw - aw)
    return DecomposedResult(
        total=total,
        step_w_dot_abs_x=swx,
        sum_abs_x=ax,
        step_x_dot_abs_w=sxw,
        sum_abs_w=aw,
    )


def operand_statistic(v):
    """sum_i abs(v_i): the precomputable magnitude residue of one operand."""
    a = _as_array(v)
    if a.dtype.kind in "iu":
        a = a.astype(np.int64)
    return np.sum(np.abs(a)).item()


def mf_neuron(w, x, alpha, b):
    """alpha * (x (+) w) + b.  The operator is nonlinear, so no extra
    activation is applied."""
    return alpha * mf_correlate(w, x) + b


# ---------------------------------------------------------------------------
# fixed-point quantization and bitplanes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuantTensor:
    """Sign/magnitude fixed-point tensor: value = data * scale.

    data holds signed integers with |v| <= 2**magnitude_bits - 1, so an
    operand occupies one sign plane plus `magnitude_bits` magnitude
    bitplanes when laid out in memory.
    """

    data: np.ndarray
    magnitude_bits: int
    scale: float

    def __post_init__(self):
        if self.magnitude_bits < 1:
            raise ValueError("magnitude_bits must be >= 1")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        limit = 2 ** self.magnitude_bits - 1
        if np.any(np.abs(self.data) > limit):
            raise ValueError(f"integer magnitude exceeds {limit}")

    @property
    def shape(self):
        return self.data.shape

    def values(self) -> np.ndarray:
        return self.data.astype(np.float64) * self.scale


def _round_half_away(v: np.ndarray) -> np.ndarray:
    # np.round is round-half-even; hardware convention is half away from zero
    return np.sign(v) * np.floor(np.abs(v) + 0.5)


def quantize(x, magnitude_bits: int) -> QuantTensor:
    """Symmetric max-abs quantization to `magnitude_bits` magnitude bits.

    scale = max|x| / (2**m - 1), 1.0 for an all-zero tensor; integers are
    rounded half away from zero, so the round-trip error is at most
    scale/2 per element.
    """
    a = _as_array(x).astype(np.float64)
    if a.size == 0:
        raise ValueError("cannot quantize an empty tensor")
    if magnitude_bits < 1:
        raise ValueError("magnitude_bits must be >= 1")
    peak = np.max(np.abs(a))
    scale = peak / (2 ** magnitude_bits - 1) if peak > 0 else 1.0
    ints = _round_half_away(a / scale).astype(np.int64)
    return QuantTensor(data=ints, magnitude_bits=magnitude_bits, scale=scale)


def dequantize(q: QuantTensor) -> np.ndarray:
    return q.values()


def bitplane_decompose(q: QuantTensor):
    """Split into a step row and magnitude bitplanes, LSB first.

    Returns (step, planes) where step[j] = step(v_j) in {0,1} and
    planes[i, j] = bit i of abs(v_j).  Reconstruction:
    v = (2*step - 1) * sum_i 2**i * planes[i].
    """
    flat = q.data.reshape(-1)
    step = (flat >= 0).astype(np.uint8)
    mags = np.abs(flat)
    m = q.magnitude_bits
    planes = ((mags[None, :] >> np.arange(m)[:, None]) & 1).astype(np.uint8)
    return step, planes


def bitplane_reconstruct(step: np.ndarray, planes: np.ndarray) -> np.ndarray:
    weights = (1 << np.arange(planes.shape[0], dtype=np.int64))
    mags = np.sum(planes.astype(np.int64) * weights[:, None], axis=0)
    return (2 * step.astype(np.int64) - 1) * mags


# ---------------------------------------------------------------------------
# smoothed surrogate for training
# ---------------------------------------------------------------------------

def _gauss(u, sigma):
    return np.exp(-np.square(u) / (2 * sigma * sigma)) / (sigma * math.sqrt(2 * math.pi))


def _sech2(u):
    # sech^2(u) = 1 - tanh^2(u), numerically safe for large |u|
    t = np.tanh(u)
    return 1.0 - t * t


def smoothed_objective(w, x, params: SurrogateParams = SurrogateParams()):
    """Correlation with tanh(beta*u) in place of both sign() factors.

    This is the differentiable forward used during training; it converges
    to mf_correlate as beta grows.
    """
    w = _as_array(w, "w").astype(np.float64)
    x = _as_array(x, "x").astype(np.float64)
    b = params.beta
    return float(np.sum(np.tanh(b * x) * np.abs(w) + np.tanh(b * w) * np.abs(x)))


def smoothed_gradient(w, x, params: SurrogateParams = SurrogateParams(),
                      smooth_sign: str = "differentiated"):
    """Element-wise partials of x (+) w with smoothed discontinuities.

    The exact partials are

        d/dx_i = sign(w_i)*sign(x_i) + 2*abs(w_i)*delta(x_i)
        d/dw_i = sign(x_i)*sign(w_i) + 2*abs(x_i)*delta(w_i)

    which are undefined where an operand is zero.  The delta is replaced
    by a zero-centered Gaussian of width sigma; the sign factors are
    smoothed by tanh(beta*u) according to `smooth_sign`:

      "differentiated"  tanh on the variable being differentiated only
                        (default)
      "both"            tanh on both sign factors
      "objective"       the exact gradient of smoothed_objective: tanh on
                        the opposing factor, hard sign from d(abs)/du, and
                        the tanh derivative in place of 2*delta

    Returns (d/dx, d/dw) arrays.
    """
    w = _as_array(w, "w").astype(np.float64)
    x = _as_array(x, "x").astype(np.float64)
    if w.shape != x.shape:
        raise ValueError(f"length mismatch: {w.shape} vs {x.shape}")
    beta, sigma = params.beta, params.sigma
    sign_w = np.where(w < 0, -1.0, 1.0)
    sign_x = np.where(x < 0, -1.0, 1.0)
    tw, tx = np.tanh(beta * w), np.tanh(beta * x)

    if smooth_sign == "differentiated":
        dx = sign_w * tx + 2.0 * np.abs(w) * _gauss(x, sigma)
        dw = sign_x * tw + 2.0 * np.abs(x) * _gauss(w, sigma)
    elif smooth_sign == "both":
        dx = tw * tx + 2.0 * np.abs(w) * _gauss(x, sigma)
        dw = tx * tw + 2.0 * np.abs(x) * _gauss(w, sigma)
    elif smooth_sign == "objective":
        dx = tw * sign_x + beta * _sech2(beta * x) * np.abs(w)
        dw = tx * sign_w + beta * _sech2(beta * w) * np.abs(x)
    else:
        raise ValueError(f"unknown smooth_sign mode: {smooth_sign!r}")
    return dx, dw
