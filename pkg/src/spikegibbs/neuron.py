"""Digital integrate-and-fire neuron and the stochastic-sigmoid sampler.

The sampler integrates a fixed input for ``Tw`` ticks.  Each tick adds a
Bernoulli(0.5)-gated leak, draws a ``TM``-bit threshold offset and compares.
The sampled bit is 1 if the neuron spiked on any tick of the window.

Randomness layout for one sample: ``2 * Tw`` words, interleaved per tick as
(leak gate, threshold offset).  Every sample consumes the full budget even
after the output has latched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ArithmeticRangeError, ParameterError
from .rng import MAX_TM, RngStream, words_to_bits, words_to_uniform_bits

INT32_MIN = -(1 << 31)
INT32_MAX = (1 << 31) - 1
MAX_ORACLE_TW = 64


@dataclass(frozen=True)
class SamplerParams:
    """``(Tw, Vt, TM, leak)`` plus the weight scale the curve is matched to."""

    tw: int
    vt: int
    tm: int
    leak: int
    scale: float = 1.0

    def __post_init__(self):
        if int(self.tw) != self.tw or self.tw < 1:
            raise ParameterError(f"Tw must be a positive integer, got {self.tw}")
        if int(self.tm) != self.tm or not 0 <= self.tm <= MAX_TM:
            raise ParameterError(f"TM must be an integer in [0, {MAX_TM}], got {self.tm}")
        if int(self.leak) != self.leak or self.leak < 0:
            raise ParameterError(f"leak must be a non-negative integer, got {self.leak}")
        if int(self.vt) != self.vt:
            raise ParameterError(f"Vt must be an integer, got {self.vt}")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ParameterError(f"scale must be positive, got {self.scale}")
        object.__setattr__(self, "tw", int(self.tw))
        object.__setattr__(self, "vt", int(self.vt))
        object.__setattr__(self, "tm", int(self.tm))
        object.__setattr__(self, "leak", int(self.leak))
        object.__setattr__(self, "scale", float(self.scale))

    @property
    def words_per_sample(self) -> int:
        return 2 * self.tw

    @property
    def saturation_high(self) -> int:
        """Smallest input that always spikes on the first tick."""
        return self.vt + (1 << self.tm) - 1

    def with_(self, **changes) -> "SamplerParams":
        values = dict(tw=self.tw, vt=self.vt, tm=self.tm, leak=self.leak, scale=self.scale)
        values.update(changes)
        return SamplerParams(**values)


# Named sampler presets P1..P7.
PRESETS = {
    "P1": SamplerParams(1, -130, 8, 0, 50),
    "P2": SamplerParams(1, -80, 8, 102, 50),
    "P3": SamplerParams(1, -20, 8, 200, 75),
    "P4": SamplerParams(1, -100, 9, 300, 120),
    "P5": SamplerParams(16, 50, 9, 15, 30),
    "P6": SamplerParams(16, 100, 10, 30, 50),
    "P7": SamplerParams(16, 633, 8, 90, 100),
}


@dataclass(frozen=True)
class NeuronConfig:
    weights: tuple
    lam: int = 0
    alpha: int = 0
    reset: int = 0

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(int(w) for w in self.weights))


@dataclass
class NeuronState:
    v: int = 0
    spiked_in_window: int = 0


def _check_int32(v: int) -> int:
    if not INT32_MIN <= v <= INT32_MAX:
        raise ArithmeticRangeError(f"membrane potential {v} outside signed 32-bit range")
    return v


def step_if(state: NeuronState, cfg: NeuronConfig, inputs: Sequence[int]):
    """One tick of the integrate-and-fire update.

    ``V' = V + sum(x_i * s_i) - lambda``; spike and reset to ``R`` when
    ``V' >= alpha``.  Returns ``(new_state, spike)``.
    """
    if len(inputs) != len(cfg.weights):
        raise ParameterError(
            f"fan-in mismatch: {len(inputs)} inputs for {len(cfg.weights)} weights")
    v = state.v + sum(int(x) * s for x, s in zip(inputs, cfg.weights)) - cfg.lam
    _check_int32(v)
    if v >= cfg.alpha:
        return NeuronState(cfg.reset, 1), 1
    return NeuronState(v, state.spiked_in_window), 0


def check_input_range(v_input, p: SamplerParams) -> None:
    """Raise if any window starting at ``v_input`` could overflow int32."""
    v = np.asarray(v_input, dtype=np.int64)
    if v.size == 0:
        return
    lo = int(v.min())
    hi = int(v.max()) + p.leak * p.tw
    if lo < INT32_MIN or hi > INT32_MAX:
        raise ArithmeticRangeError(
            f"input range [{lo}, {hi}] overflows signed 32-bit membrane potential")
    if p.vt + (1 << p.tm) - 1 > INT32_MAX or p.vt < INT32_MIN:
        raise ArithmeticRangeError("threshold range overflows signed 32-bit")


def spikes_from_words(v_input, words: np.ndarray, p: SamplerParams) -> np.ndarray:
    """Vectorized sampler kernel.

    ``words`` has shape ``(*batch, 2 * Tw)`` and ``v_input`` broadcasts
    against ``batch``.  Returns an int array of sampled bits, shape ``batch``.
    """
    words = np.asarray(words, dtype=np.uint64)
    if words.shape[-1] != p.words_per_sample:
        raise ParameterError(
            f"expected {p.words_per_sample} words per sample, got {words.shape[-1]}")
    v0 = np.asarray(v_input, dtype=np.int64)
    check_input_range(v0, p)
    pairs = words.reshape(words.shape[:-1] + (p.tw, 2))
    gates = words_to_bits(pairs[..., 0])
    offsets = words_to_uniform_bits(pairs[..., 1], p.tm)
    potential = v0[..., None] + p.leak * np.cumsum(gates, axis=-1)
    return np.any(potential >= p.vt + offsets, axis=-1).astype(np.int64)


def sample_unit(v_input: int, p: SamplerParams, s: RngStream) -> int:
    """Draw one sampled bit for the total input ``v_input``."""
    return int(spikes_from_words(int(v_input), s.raw(p.words_per_sample), p))


def _no_spike_factor(v: np.ndarray, p: SamplerParams) -> np.ndarray:
    levels = 1 << p.tm
    hits = np.clip(v - p.vt + 1, 0, levels)
    return 1.0 - hits / levels


def exact_activation_probability(v_input, p: SamplerParams):
    """Exact spike probability of the sampler by dynamic programming.

    The state is the number of leak gates that fired so far; each tick
    multiplies the surviving mass by the chance the threshold was missed.
    Accepts a scalar or an array of inputs; cost is O(Tw^2) per input.
    """
    if p.tw > MAX_ORACLE_TW:
        raise ParameterError(f"exact oracle supports Tw <= {MAX_ORACLE_TW}, got {p.tw}")
    scalar = np.ndim(v_input) == 0
    v = np.atleast_1d(np.asarray(v_input, dtype=np.int64))
    check_input_range(v, p)
    # survive[:, k]: probability of k leak gates so far and no spike yet
    survive = np.zeros((v.size, p.tw + 1))
    survive[:, 0] = 1.0
    ks = np.arange(p.tw + 1)
    for t in range(1, p.tw + 1):
        moved = np.zeros_like(survive)
        moved[:, :t + 1] = 0.5 * survive[:, :t + 1]
        moved[:, 1:t + 1] += 0.5 * survive[:, :t]
        potential = v[:, None] + p.leak * ks[None, :t + 1]
        moved[:, :t + 1] *= _no_spike_factor(potential, p)
        survive = moved
    prob = 1.0 - survive.sum(axis=1)
    prob = np.clip(prob, 0.0, 1.0)
    return float(prob[0]) if scalar else prob


def ideal_activation_probability(v, scale: float = 1.0):
    """Logistic sigmoid of ``v / scale``."""
    if not scale > 0:
        raise ParameterError(f"scale must be positive, got {scale}")
    x = np.asarray(v, dtype=np.float64) / scale
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return float(out) if out.ndim == 0 else out
