"""Activation-curve characterization: sweeps, oracle curves, crossbar harness."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .neuron import (NeuronConfig, NeuronState, SamplerParams, check_input_range,
                     exact_activation_probability, ideal_activation_probability,
                     spikes_from_words)
from .rng import make_stream, words_to_bits, words_to_uniform_bits


@dataclass
class ActivationCurve:
    v: np.ndarray
    p: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.v = np.asarray(self.v)
        self.p = np.asarray(self.p, dtype=np.float64)
        if self.v.shape != self.p.shape or self.v.ndim != 1:
            raise ParameterError("curve needs matching 1-d v and p arrays")
        if self.v.size > 1 and np.any(np.diff(self.v) <= 0):
            raise ParameterError("curve v values must be strictly increasing")
        if np.any((self.p < 0) | (self.p > 1)):
            raise ParameterError("curve probabilities must lie in [0, 1]")

    def __len__(self):
        return self.v.size

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["v", "p"])
        for v, p in zip(self.v, self.p):
            writer.writerow([fmt(v), fmt(p)])
        return buf.getvalue()


def fmt(x) -> str:
    """Fixed CSV number format: 9 significant digits."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".9g")


def make_grid(v_min: int, v_max: int, v_step: int) -> np.ndarray:
    if v_step < 1:
        raise ParameterError(f"grid step must be positive, got {v_step}")
    if v_min >= v_max:
        raise ParameterError(f"empty grid: v_min={v_min} >= v_max={v_max}")
    return np.arange(v_min, v_max + 1, v_step, dtype=np.int64)


def sweep_empirical(p: SamplerParams, v_min: int, v_max: int, v_step: int,
                    n_samples: int, seed: int, threads: int = 1) -> ActivationCurve:
    """Monte-Carlo activation curve; grid point ``i`` uses stream ``(seed, i)``."""
    if n_samples < 1:
        raise ParameterError(f"n_samples must be positive, got {n_samples}")
    grid = make_grid(v_min, v_max, v_step)
    check_input_range(grid, p)

    def estimate(index: int) -> float:
        words = make_stream(seed, index).raw(n_samples * p.words_per_sample)
        bits = spikes_from_words(grid[index], words.reshape(n_samples, -1), p)
        return bits.mean()

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            probs = list(pool.map(estimate, range(grid.size)))
    else:
        probs = [estimate(i) for i in range(grid.size)]
    return ActivationCurve(grid, np.array(probs),
                           {"kind": "empirical", "n_samples": n_samples, "seed": seed})


def sweep_oracle(p: SamplerParams, v_min: int, v_max: int, v_step: int) -> ActivationCurve:
    grid = make_grid(v_min, v_max, v_step)
    return ActivationCurve(grid, exact_activation_probability(grid, p), {"kind": "exact_oracle"})


def sweep_ideal(scale: float, v_min: int, v_max: int, v_step: int) -> ActivationCurve:
    grid = make_grid(v_min, v_max, v_step)
    return ActivationCurve(grid, ideal_activation_probability(grid, scale),
                           {"kind": "ideal", "scale": scale})


def compare_curves(a: ActivationCurve, b: ActivationCurve) -> dict:
    if a.v.shape != b.v.shape or np.any(a.v != b.v):
        raise ParameterError("curves are defined on different v grids")
    diff = a.p - b.p
    return {"rmse": float(np.sqrt(np.mean(diff ** 2))),
            "sup_norm": float(np.max(np.abs(diff)))}


def single_noise_decomposition(p: SamplerParams, which: str, v_min: int, v_max: int,
                               v_step: int = 1) -> ActivationCurve:
    """Oracle curve with one noise source switched off.

    ``threshold_only`` forces the leak to 0; ``leak_only`` forces TM to 0.
    """
    if which == "threshold_only":
        q = p.with_(leak=0)
    elif which == "leak_only":
        q = p.with_(tm=0)
    else:
        raise ParameterError(f"unknown decomposition {which!r}")
    curve = sweep_oracle(q, v_min, v_max, v_step)
    curve.provenance = {"kind": "exact_oracle", "decomposition": which}
    return curve


@dataclass(frozen=True)
class CrossbarHarnessConfig:
    k: int = 100
    tw: int = 16
    vt: int = 50
    tm: int = 9
    leak_weight: int = 15
    stimulus_period: int | None = None
    n_windows: int = 1000

    def __post_init__(self):
        if self.stimulus_period is None:
            object.__setattr__(self, "stimulus_period", self.tw + 2)
        if self.k < 1:
            raise ParameterError(f"K must be >= 1, got {self.k}")
        if self.tw < 1:
            raise ParameterError(f"Tw must be >= 1, got {self.tw}")
        if self.stimulus_period < self.tw:
            raise ParameterError("stimulus period shorter than the sampling window")
        if self.n_windows < 0:
            raise ParameterError(f"n_windows must be non-negative, got {self.n_windows}")

    @property
    def params(self) -> SamplerParams:
        return SamplerParams(self.tw, self.vt, self.tm, self.leak_weight)


@dataclass
class CrossbarResult:
    weights: np.ndarray
    counts: np.ndarray
    n_windows: int
    raster: list  # (tick, neuron_index), sorted

    @property
    def curve(self) -> ActivationCurve:
        if self.n_windows == 0:
            raise ParameterError("no windows simulated; firing curve undefined")
        return ActivationCurve(self.weights, self.counts / self.n_windows,
                               {"kind": "crossbar", "n_windows": self.n_windows})

    def raster_csv(self) -> str:
        lines = ["tick,neuron_index"]
        lines.extend(f"{t},{n}" for t, n in self.raster)
        return "\n".join(lines) + "\n"


def crossbar_characterize(cfg: CrossbarHarnessConfig, seed: int) -> CrossbarResult:
    """Tick-level simulation of the sigmoid characterization circuit.

    Axon ``d_w`` feeds data neuron ``n_w`` (index ``w + K``) with weight ``w``
    once per stimulus period.  A single leak neuron fires Bernoulli(0.5)
    every active tick and reaches all data neurons through weight
    ``leak_weight``.  Each data neuron has deterministic leak 0 and a
    stochastic threshold ``Vt + u``.  Membrane potentials are cleared at the
    start of each period; the trailing idle ticks do nothing.  Only the
    first spike of a window is recorded (the sampled bit latches).

    Streams: data neuron ``i`` draws thresholds from ``(seed, i)``; the leak
    neuron uses ``(seed, 2K + 1)``.
    """
    n = 2 * cfg.k + 1
    weights = np.arange(-cfg.k, cfg.k + 1, dtype=np.int64)
    check_input_range(weights, cfg.params)
    ticks = cfg.n_windows * cfg.tw
    leak_gates = make_stream(seed, n).bernoulli_half(ticks).reshape(cfg.n_windows, cfg.tw)
    offsets = np.empty((n, cfg.n_windows, cfg.tw), dtype=np.int64)
    for i in range(n):
        offsets[i] = make_stream(seed, i).uniform_bits(cfg.tm, ticks).reshape(cfg.n_windows, cfg.tw)

    crossbar = np.diag(weights)  # axon d_w -> neuron n_w only
    leak_row = np.full(n, cfg.leak_weight, dtype=np.int64)
    counts = np.zeros(n, dtype=np.int64)
    raster = []
    for window in range(cfg.n_windows):
        v = np.zeros(n, dtype=np.int64)
        latched = np.zeros(n, dtype=bool)
        base_tick = window * cfg.stimulus_period
        for t in range(cfg.tw):
            if t == 0:
                v = v + np.ones(n, dtype=np.int64) @ crossbar
            v = v + leak_gates[window, t] * leak_row
            fired = v >= cfg.vt + offsets[:, window, t]
            new = fired & ~latched
            for idx in np.flatnonzero(new):
                raster.append((base_tick + t, int(idx)))
            latched |= fired
        counts += latched
    return CrossbarResult(weights, counts, cfg.n_windows, raster)


def crossbar_neuron_trace(cfg: CrossbarHarnessConfig, neuron: int, leak_gates, offsets):
    """Replay one data neuron with the scalar ``step_if`` update.

    ``leak_gates`` and ``offsets`` are the per-tick draws of one window.
    Returns the tick of the first spike, or None.  Used to cross-check the
    vectorized crossbar against the scalar neuron model.
    """
    from .neuron import step_if

    w = neuron - cfg.k
    state = NeuronState()
    for t in range(cfg.tw):
        neuron_cfg = NeuronConfig(weights=(w, cfg.leak_weight), lam=0,
                                  alpha=cfg.vt + int(offsets[t]), reset=0)
        x = (1 if t == 0 else 0, int(leak_gates[t]))
        state, spike = step_if(state, neuron_cfg, x)
        if spike:
            return t
    return None
