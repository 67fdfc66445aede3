"""RBM model, quantization, Gibbs sampling with pluggable samplers, and KL.

Joint states of an ``nv + nh`` unit RBM are indexed with visible bit ``i``
at position ``i`` and hidden bit ``j`` at position ``nv + j``.

Stream layout for Gibbs chains: unit ``u`` of chain ``c`` (visible units
``0..nv-1``, hidden units ``nv..nv+nh-1``) draws from stream
``(seed, chain_stream_id(c, u))``.  A sample consumes ``words_per_sample``
words from the unit's stream; clamped units consume nothing.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Iterator, Sequence, Union

import numpy as np

from .errors import ParameterError
from .neuron import (SamplerParams, check_input_range, ideal_activation_probability,
                     spikes_from_words)
from .rng import chain_stream_id, make_stream, words_to_unit_float

MAX_EXACT_UNITS = 20
V_TO_H = "v_to_h"
H_TO_V = "h_to_v"


@dataclass
class Rbm:
    W: np.ndarray
    b_v: np.ndarray
    b_h: np.ndarray

    def __post_init__(self):
        self.W = np.atleast_2d(np.asarray(self.W, dtype=np.float64))
        self.b_v = np.asarray(self.b_v, dtype=np.float64).reshape(-1)
        self.b_h = np.asarray(self.b_h, dtype=np.float64).reshape(-1)
        _check_shapes(self)
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.b_v))
                and np.all(np.isfinite(self.b_h))):
            raise ParameterError("RBM parameters must be finite")

    @property
    def n_visible(self) -> int:
        return self.W.shape[0]

    @property
    def n_hidden(self) -> int:
        return self.W.shape[1]

    def to_dict(self) -> dict:
        return {"n_visible": self.n_visible, "n_hidden": self.n_hidden,
                "W": self.W.reshape(-1).tolist(), "b_v": self.b_v.tolist(),
                "b_h": self.b_h.tolist()}


@dataclass
class QuantizedRbm:
    W: np.ndarray
    b_v: np.ndarray
    b_h: np.ndarray
    scale: float
    weight_bits: int = 9
    clip_count: int = 0

    def __post_init__(self):
        self.W = np.atleast_2d(np.asarray(self.W, dtype=np.int64))
        self.b_v = np.asarray(self.b_v, dtype=np.int64).reshape(-1)
        self.b_h = np.asarray(self.b_h, dtype=np.int64).reshape(-1)
        _check_shapes(self)
        if not self.scale > 0:
            raise ParameterError(f"scale must be positive, got {self.scale}")
        bound = weight_bound(self.weight_bits)
        for arr in (self.W, self.b_v, self.b_h):
            if arr.size and np.abs(arr).max() > bound:
                raise ParameterError(f"entry outside signed {self.weight_bits}-bit range")

    @property
    def n_visible(self) -> int:
        return self.W.shape[0]

    @property
    def n_hidden(self) -> int:
        return self.W.shape[1]

    def to_dict(self) -> dict:
        return {"n_visible": self.n_visible, "n_hidden": self.n_hidden,
                "W": self.W.reshape(-1).tolist(), "b_v": self.b_v.tolist(),
                "b_h": self.b_h.tolist(), "scale": self.scale,
                "weight_bits": self.weight_bits}


Model = Union[Rbm, QuantizedRbm]


def _check_shapes(m) -> None:
    nv, nh = m.W.shape
    if nv < 1 or nh < 1:
        raise ParameterError("RBM needs at least one visible and one hidden unit")
    if m.b_v.shape != (nv,) or m.b_h.shape != (nh,):
        raise ParameterError(
            f"bias shapes {m.b_v.shape}/{m.b_h.shape} do not match W {m.W.shape}")


def weight_bound(weight_bits: int) -> int:
    if weight_bits < 2:
        raise ParameterError(f"weight_bits must be >= 2, got {weight_bits}")
    return (1 << (weight_bits - 1)) - 1


def model_from_dict(d: dict) -> Model:
    try:
        nv, nh = int(d["n_visible"]), int(d["n_hidden"])
        W = np.asarray(d["W"], dtype=np.float64)
        if W.size != nv * nh:
            raise ParameterError(f"W has {W.size} entries, expected {nv}x{nh}")
        W = W.reshape(nv, nh)
        if "scale" in d:
            if not np.all(W == np.round(W)):
                raise ParameterError("quantized model has non-integer weights")
            return QuantizedRbm(W.astype(np.int64), d["b_v"], d["b_h"],
                                float(d["scale"]), int(d.get("weight_bits", 9)))
        return Rbm(W, d["b_v"], d["b_h"])
    except KeyError as exc:
        raise ParameterError(f"model JSON is missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ParameterError):
            raise
        raise ParameterError(f"malformed model JSON: {exc}") from None


def load_model(path) -> Model:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParameterError(f"{path}: invalid JSON ({exc.msg}, line {exc.lineno})") from None
    if not isinstance(d, dict):
        raise ParameterError(f"{path}: model JSON must be an object")
    return model_from_dict(d)


def save_model(m: Model, path) -> None:
    Path(path).write_text(json.dumps(m.to_dict(), indent=1) + "\n")


def canonical_rbm() -> Rbm:
    """The fixed 3-visible / 2-hidden model used for KL studies.

    Drawn once from ``default_rng(42)``: weights U[-2, 2], biases U[-1, 1]
    (see ``tests/test_rbm.py::test_canonical_model_is_frozen``).
    """
    return Rbm(W=[[1.0958241942238534, -0.24448624099179073],
                  [1.4343916796455298, 0.7894721162374556],
                  [-1.6232906084494019, 1.9024894065470237]],
               b_v=[0.5222794039807059, 0.5721286105539076, -0.7437727346489083],
               b_h=[-0.09922812420886573, -0.25840395153483753])


# ---------------------------------------------------------------- energy / exact

def _bits(x, n: int, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != n:
        raise ParameterError(f"{name} has length {x.size}, expected {n}")
    return x


def energy(m: Rbm, v, h) -> float:
    v = _bits(v, m.n_visible, "v")
    h = _bits(h, m.n_hidden, "h")
    return float(-(v @ m.W @ h) - m.b_v @ v - m.b_h @ h)


def state_bits(n_units: int) -> np.ndarray:
    """All ``2**n_units`` binary states, row ``s`` holding the bits of ``s``."""
    idx = np.arange(1 << n_units)
    return ((idx[:, None] >> np.arange(n_units)[None, :]) & 1).astype(np.int64)


def state_index(bits) -> int:
    bits = np.asarray(bits, dtype=np.int64)
    return int((bits << np.arange(bits.shape[-1])).sum(axis=-1))


@dataclass
class JointDistribution:
    probabilities: np.ndarray
    n_visible: int
    n_hidden: int
    n_samples: int | None = None  # set for histograms

    def __post_init__(self):
        self.probabilities = np.asarray(self.probabilities, dtype=np.float64)
        if self.probabilities.shape != (1 << (self.n_visible + self.n_hidden),):
            raise ParameterError("distribution table does not match the state space")

    def marginal_visible(self) -> np.ndarray:
        return self.probabilities.reshape(1 << self.n_hidden, 1 << self.n_visible).sum(axis=0)

    @property
    def counts(self) -> np.ndarray:
        if self.n_samples is None:
            raise ParameterError("distribution is not a sample histogram")
        return np.rint(self.probabilities * self.n_samples)


def exact_joint_distribution(m: Rbm) -> JointDistribution:
    nv, nh = m.n_visible, m.n_hidden
    if nv + nh > MAX_EXACT_UNITS:
        raise ParameterError(f"exact enumeration limited to {MAX_EXACT_UNITS} units")
    states = state_bits(nv + nh).astype(np.float64)
    v, h = states[:, :nv], states[:, nv:]
    neg_energy = np.einsum("si,ij,sj->s", v, m.W, h) + v @ m.b_v + h @ m.b_h
    neg_energy -= neg_energy.max()
    weights = np.exp(neg_energy)
    return JointDistribution(weights / weights.sum(), nv, nh)


def kl_divergence(p_exact: JointDistribution, histogram: JointDistribution,
                  epsilon: float = 1e-9) -> float:
    """KL(exact || smoothed histogram) in nats.

    The histogram is smoothed as ``(count + epsilon) / (N + epsilon * |S|)``.
    """
    if p_exact.probabilities.shape != histogram.probabilities.shape:
        raise ParameterError("distributions are over different state spaces")
    if epsilon < 0:
        raise ParameterError(f"epsilon must be non-negative, got {epsilon}")
    p = p_exact.probabilities
    if histogram.n_samples is None:
        q = histogram.probabilities
        if epsilon:
            q = (q + epsilon) / (1.0 + epsilon * q.size)
    else:
        q = (histogram.counts + epsilon) / (histogram.n_samples + epsilon * p.size)
    support = p > 0
    with np.errstate(divide="ignore"):
        terms = p[support] * (np.log(p[support]) - np.log(q[support]))
    return float(terms.sum())


# ---------------------------------------------------------------- quantization

def round_half_away(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize(m: Rbm, scale: float, weight_bits: int = 9) -> QuantizedRbm:
    """Scale, round half away from zero, and clip into the signed range.

    The number of clipped entries is reported in ``clip_count``.
    """
    if not scale > 0:
        raise ParameterError(f"scale must be positive, got {scale}")
    bound = weight_bound(weight_bits)
    clips = 0
    out = []
    for arr in (m.W, m.b_v, m.b_h):
        r = round_half_away(arr * scale)
        clips += int(np.count_nonzero(np.abs(r) > bound))
        out.append(np.clip(r, -bound, bound).astype(np.int64))
    return QuantizedRbm(out[0], out[1], out[2], float(scale), weight_bits, clips)


# ---------------------------------------------------------------- samplers

@dataclass(frozen=True)
class IdealSampler:
    """Logistic sampler.  On a QuantizedRbm the field is divided by ``scale``;
    on a real-valued Rbm the field is already in natural units."""

    scale: float = 1.0
    words_per_sample = 1

    def __post_init__(self):
        if not self.scale > 0:
            raise ParameterError(f"ideal sampler scale must be positive, got {self.scale}")

    def probability(self, fields, model: Model) -> np.ndarray:
        divisor = self.scale if isinstance(model, QuantizedRbm) else 1.0
        return ideal_activation_probability(fields, divisor)

    def sample(self, fields, words, model: Model) -> np.ndarray:
        u = words_to_unit_float(np.asarray(words)[..., 0])
        return (u < self.probability(fields, model)).astype(np.int64)

    def spec(self) -> str:
        return f"ideal:{fmt_real(self.scale)}"


@dataclass(frozen=True)
class DigitalSampler:
    params: SamplerParams

    @property
    def words_per_sample(self) -> int:
        return self.params.words_per_sample

    @property
    def scale(self) -> float:
        return self.params.scale

    def _require_quantized(self, model):
        if not isinstance(model, QuantizedRbm):
            raise ParameterError("the digital sampler needs a quantized (integer) model")

    def probability(self, fields, model: Model) -> np.ndarray:
        from .neuron import exact_activation_probability
        self._require_quantized(model)
        return exact_activation_probability(np.asarray(fields, dtype=np.int64), self.params)

    def sample(self, fields, words, model: Model) -> np.ndarray:
        self._require_quantized(model)
        return spikes_from_words(np.asarray(fields, dtype=np.int64), words, self.params)

    def spec(self) -> str:
        p = self.params
        return f"digital:{p.tw},{p.vt},{p.tm},{p.leak}:scale={fmt_real(p.scale)}"


SamplerKind = Union[IdealSampler, DigitalSampler]


def fmt_real(x: float) -> str:
    return format(float(x), ".9g")


_INT = r"[+-]?\d+"
_REAL = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_IDEAL_RE = re.compile(rf"ideal:({_REAL})")
_DIGITAL_RE = re.compile(rf"digital:({_INT}),({_INT}),({_INT}),({_INT}):scale=({_REAL})")


def parse_sampler_spec(text: str) -> SamplerKind:
    """Parse ``ideal:<scale>`` or ``digital:<Tw>,<Vt>,<TM>,<leak>:scale=<s>``."""
    m = _IDEAL_RE.fullmatch(text.strip())
    if m:
        return IdealSampler(float(m.group(1)))
    m = _DIGITAL_RE.fullmatch(text.strip())
    if m:
        tw, vt, tm, leak = (int(g) for g in m.groups()[:4])
        return DigitalSampler(SamplerParams(tw, vt, tm, leak, float(m.group(5))))
    raise ParameterError(
        f"bad sampler spec {text!r}; expected ideal:<scale> or "
        "digital:<Tw>,<Vt>,<TM>,<leak>:scale=<s>")


def model_for_sampler(m: Rbm, kind: SamplerKind, weight_bits: int = 9) -> Model:
    """Real model for the ideal sampler, quantized at the sampler's scale otherwise."""
    if isinstance(kind, IdealSampler):
        return m
    return quantize(m, kind.scale, weight_bits)


# ---------------------------------------------------------------- fields / layers

def _layer_params(m: Model, direction: str):
    if direction == V_TO_H:
        return m.W, m.b_h
    if direction == H_TO_V:
        return m.W.T, m.b_v
    raise ParameterError(f"unknown direction {direction!r}")


def fields(m: Model, direction: str, other_layer) -> np.ndarray:
    """Total input to every unit of the target layer; batches over leading axes."""
    W, bias = _layer_params(m, direction)
    x = np.asarray(other_layer)
    if x.shape[-1] != W.shape[0]:
        raise ParameterError(f"other layer has {x.shape[-1]} units, expected {W.shape[0]}")
    if isinstance(m, QuantizedRbm):
        return x.astype(np.int64) @ W + bias
    return x.astype(np.float64) @ W + bias


def field(q: Model, direction: str, other_layer, unit_index: int):
    W, _ = _layer_params(q, direction)
    if not 0 <= unit_index < W.shape[1]:
        raise ParameterError(f"unit index {unit_index} out of range")
    value = fields(q, direction, np.asarray(other_layer).reshape(-1))[unit_index]
    return int(value) if isinstance(q, QuantizedRbm) else float(value)


def sample_layer(q: Model, direction: str, other_layer, kind: SamplerKind,
                 streams: Sequence) -> np.ndarray:
    """Sample every unit of the target layer, one stream per unit."""
    f = fields(q, direction, np.asarray(other_layer).reshape(-1))
    if len(streams) != f.size:
        raise ParameterError(f"{len(streams)} streams for {f.size} target units")
    words = np.stack([s.raw(kind.words_per_sample) for s in streams])
    return kind.sample(f, words, q)


def conditional_probabilities(q: Model, direction: str, other_layer, kind: SamplerKind):
    """Per-unit activation probabilities of the target layer under ``kind``."""
    return kind.probability(fields(q, direction, other_layer), q)


# ---------------------------------------------------------------- Gibbs chains

class _ChainRandomness:
    """Pre-drawn words for a batch of chains, refilled in sweep blocks."""

    def __init__(self, seed: int, chain_ids, units, words_per_sample: int, block: int):
        self.streams = [[make_stream(seed, chain_stream_id(c, u)) for u in units]
                        for c in chain_ids]
        self.wps = words_per_sample
        self.block = block
        self.buffer = None
        self.cursor = block

    def next(self) -> np.ndarray:
        """Words for one sweep, shape (chains, units, words_per_sample)."""
        if self.cursor == self.block:
            n = self.block * self.wps
            self.buffer = np.array([[s.raw(n) for s in row] for row in self.streams],
                                   dtype=np.uint64).reshape(
                len(self.streams), -1, self.block, self.wps)
            self.cursor = 0
        out = self.buffer[:, :, self.cursor, :]
        self.cursor += 1
        return out


def iterate_chains(q: Model, init_visible, n_steps: int, kind: SamplerKind,
                   clamp_mask=None, seed: int = 0, chain_ids=None,
                   block: int = 256) -> Iterator[tuple]:
    """Run a batch of Gibbs chains, yielding ``(v, h)`` after every full sweep.

    ``init_visible`` has shape (chains, nv).  Each sweep samples all hidden
    units from the visible layer, then every unclamped visible unit from the
    new hidden layer.  Clamped visible bits keep their initial values.
    """
    v = np.array(init_visible, dtype=np.int64, ndmin=2)
    n_chains, nv = v.shape
    if nv != q.n_visible:
        raise ParameterError(f"initial visible layer has {nv} units, expected {q.n_visible}")
    if n_steps < 1:
        raise ParameterError(f"n_steps must be >= 1, got {n_steps}")
    mask = np.zeros(nv, dtype=bool) if clamp_mask is None else np.asarray(clamp_mask, dtype=bool)
    if mask.shape != (nv,):
        raise ParameterError("clamp mask length does not match the visible layer")
    chain_ids = list(range(n_chains)) if chain_ids is None else list(chain_ids)
    if len(chain_ids) != n_chains:
        raise ParameterError("one chain id per chain is required")
    free = np.flatnonzero(~mask)
    hidden_units = nv + np.arange(q.n_hidden)
    block = max(1, min(block, n_steps))
    rand_h = _ChainRandomness(seed, chain_ids, hidden_units, kind.words_per_sample, block)
    rand_v = _ChainRandomness(seed, chain_ids, free, kind.words_per_sample, block)
    for _ in range(n_steps):
        h = kind.sample(fields(q, V_TO_H, v), rand_h.next(), q)
        if free.size:
            v = v.copy()
            v[:, free] = kind.sample(fields(q, H_TO_V, h)[:, free], rand_v.next(), q)
        yield v, h


@dataclass
class ChainResult:
    n_visible: int
    n_hidden: int
    counts: np.ndarray | None = None
    states: np.ndarray | None = None  # joint state indices, one per sweep

    def histogram(self) -> JointDistribution:
        counts = self.counts
        if counts is None:
            counts = np.bincount(self.states, minlength=1 << (self.n_visible + self.n_hidden))
        n = int(counts.sum())
        return JointDistribution(counts / n, self.n_visible, self.n_hidden, n_samples=n)


_TABULATE_LIMIT = 8  # max units in a layer for the lookup-table fast path


def gibbs_chain(q: Model, init_visible, n_steps: int, kind: SamplerKind,
                clamp_mask=None, seed: int = 0, chain: int = 0,
                record_states: bool = False) -> ChainResult:
    """A single Gibbs chain; returns the joint-state histogram (and optionally
    the sequence of joint-state indices).

    Small models (both layers at most 8 units) use an equivalent lookup-table
    path: every sweep's sampled bit is precomputed for each possible
    configuration of the conditioning layer from the same random words, so
    the output is identical to ``iterate_chains``.
    """
    nv, nh = q.n_visible, q.n_hidden
    if nv + nh > MAX_EXACT_UNITS and not record_states:
        raise ParameterError(f"joint histograms limited to {MAX_EXACT_UNITS} units")
    init = np.asarray(init_visible, dtype=np.int64).reshape(-1)
    if nv <= _TABULATE_LIMIT and nh <= _TABULATE_LIMIT:
        states = _tabulated_chain(q, init, n_steps, kind, clamp_mask, seed, chain)
    else:
        states = np.empty(n_steps, dtype=np.int64)
        shift_v = 1 << np.arange(nv)
        shift_h = 1 << (nv + np.arange(nh))
        for t, (v, h) in enumerate(iterate_chains(q, init[None, :], n_steps, kind,
                                                  clamp_mask, seed, [chain])):
            states[t] = int(v[0] @ shift_v + h[0] @ shift_h)
    counts = np.bincount(states, minlength=1 << (nv + nh))
    return ChainResult(nv, nh, counts=counts, states=states if record_states else None)


def _tabulated_chain(q, init, n_steps, kind, clamp_mask, seed, chain) -> np.ndarray:
    nv, nh = q.n_visible, q.n_hidden
    if init.size != nv:
        raise ParameterError(f"initial visible layer has {init.size} units, expected {nv}")
    if n_steps < 1:
        raise ParameterError(f"n_steps must be >= 1, got {n_steps}")
    mask = np.zeros(nv, dtype=bool) if clamp_mask is None else np.asarray(clamp_mask, dtype=bool)
    if mask.shape != (nv,):
        raise ParameterError("clamp mask length does not match the visible layer")
    free = np.flatnonzero(~mask)
    wps = kind.words_per_sample
    v_configs, h_configs = state_bits(nv), state_bits(nh)
    fields_h = fields(q, V_TO_H, v_configs)          # (2**nv, nh)
    fields_v = fields(q, H_TO_V, h_configs)[:, free]  # (2**nh, free)
    streams_h = [make_stream(seed, chain_stream_id(chain, nv + j)) for j in range(nh)]
    streams_v = [make_stream(seed, chain_stream_id(chain, int(i))) for i in free]
    clamp_bits = int(state_index(init * mask))
    free_weights = (1 << free).astype(np.int64)
    v_cfg = state_index(init)
    out = np.empty(n_steps, dtype=np.int64)
    block = 4096
    for start in range(0, n_steps, block):
        n = min(block, n_steps - start)
        wh = np.stack([s.raw(n * wps).reshape(n, wps) for s in streams_h], axis=1)
        # bits_h[t, cfg, j]: hidden unit j's sample at sweep t given visible config cfg
        bits_h = kind.sample(fields_h[None, :, :], wh[:, None, :, :], q)
        next_h = (bits_h << np.arange(nh)).sum(axis=2).tolist()
        if free.size:
            wv = np.stack([s.raw(n * wps).reshape(n, wps) for s in streams_v], axis=1)
            bits_v = kind.sample(fields_v[None, :, :], wv[:, None, :, :], q)
            next_v = ((bits_v * free_weights).sum(axis=2) | clamp_bits).tolist()
        for t in range(n):
            h_cfg = next_h[t][v_cfg]
            if free.size:
                v_cfg = next_v[t][h_cfg]
            out[start + t] = v_cfg | (h_cfg << nv)
    return out


def dbn_infer(stack: Sequence[Model], visible, kind: SamplerKind, seed: int = 0):
    """Feed-forward layer-wise sampling through a stack of RBMs.

    Layer ``k + 1`` is sampled from RBM ``k`` given layer ``k``; the units of
    RBM ``k``'s hidden layer use streams ``chain_stream_id(k, j)``.
    Returns ``[visible, layer1, layer2, ...]``.
    """
    if not stack:
        raise ParameterError("empty RBM stack")
    for k in range(len(stack) - 1):
        if stack[k].n_hidden != stack[k + 1].n_visible:
            raise ParameterError(
                f"RBM {k} has {stack[k].n_hidden} hidden units but RBM {k + 1} "
                f"has {stack[k + 1].n_visible} visible units")
    layers = [np.asarray(visible, dtype=np.int64).reshape(-1)]
    for k, rbm in enumerate(stack):
        streams = [make_stream(seed, chain_stream_id(k, j)) for j in range(rbm.n_hidden)]
        layers.append(sample_layer(rbm, V_TO_H, layers[-1], kind, streams))
    return layers
