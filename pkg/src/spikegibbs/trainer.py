"""Offline CD-1 training in full precision."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data_io import LabeledDataset
from .errors import ParameterError
from .neuron import ideal_activation_probability as sigmoid
from .rbm import Rbm
from .rng import make_stream


@dataclass(frozen=True)
class TrainConfig:
    n_hidden: int = 100
    epochs: int = 30
    learning_rate: float = 0.05
    minibatch: int = 20
    seed: int = 0
    weight_init_sigma: float = 0.01

    def __post_init__(self):
        if self.n_hidden < 1 or self.minibatch < 1:
            raise ParameterError("n_hidden and minibatch must be positive")
        if self.epochs < 0:
            raise ParameterError(f"epochs must be non-negative, got {self.epochs}")
        if not (self.learning_rate > 0 and self.weight_init_sigma > 0):
            raise ParameterError("learning_rate and weight_init_sigma must be positive")


@dataclass
class TrainResult:
    rbm: Rbm
    reconstruction_error: list = field(default_factory=list)  # per epoch


def cd1_train(data, cfg: TrainConfig) -> TrainResult:
    """Train an RBM on binary rows of ``data`` with one-step contrastive divergence.

    Positive phase uses sampled hiddens; the reconstruction uses visible
    probabilities and the negative hidden statistics use probabilities.  The
    reported error is the mean pixel mismatch between each batch and its
    sampled one-sweep reconstruction.  Randomness: stream ``(seed, 0)`` for
    the initial weights, ``(seed, 1)`` for shuffling and unit sampling.
    """
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ParameterError("training data must be a nonempty (n, n_visible) array")
    n, nv = x.shape
    init = make_stream(cfg.seed, 0).generator()
    rng = make_stream(cfg.seed, 1).generator()
    W = init.normal(0.0, cfg.weight_init_sigma, size=(nv, cfg.n_hidden))
    b_v = np.zeros(nv)
    b_h = np.zeros(cfg.n_hidden)
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        mismatches = 0.0
        for start in range(0, n, cfg.minibatch):
            v0 = x[order[start:start + cfg.minibatch]]
            ph0 = sigmoid(v0 @ W + b_h)
            h0 = (rng.random(ph0.shape) < ph0).astype(np.float64)
            pv1 = sigmoid(h0 @ W.T + b_v)
            v1 = (rng.random(pv1.shape) < pv1).astype(np.float64)
            ph1 = sigmoid(pv1 @ W + b_h)
            rate = cfg.learning_rate / v0.shape[0]
            W += rate * (v0.T @ ph0 - pv1.T @ ph1)
            b_v += rate * (v0 - pv1).sum(axis=0)
            b_h += rate * (ph0 - ph1).sum(axis=0)
            mismatches += np.abs(v0 - v1).sum()
        err = mismatches / (n * nv)
        if not (math.isfinite(err) and np.all(np.isfinite(W))):
            raise FloatingPointError(f"training diverged at epoch {epoch}")
        history.append(float(err))
    return TrainResult(Rbm(W, b_v, b_h), history)


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, n_classes), dtype=np.uint8)
    out[np.arange(labels.size), labels] = 1
    return out


def labeled_training_vectors(ds: LabeledDataset) -> np.ndarray:
    """Rows of ``[pixels | one-hot(label)]``."""
    if ds.labels is None or ds.labels.size != ds.images.shape[0]:
        raise ParameterError("labeled training needs one label per image")
    return np.hstack([ds.images, one_hot(ds.labels, ds.n_classes)])


def build_labeled_rbm(ds: LabeledDataset, cfg: TrainConfig) -> TrainResult:
    """Train a joint pixel+label RBM; the label units are the last visibles."""
    return cd1_train(labeled_training_vectors(ds), cfg)


def reconstruction_error(m: Rbm, data, seed: int = 0) -> float:
    """Mean pixel mismatch after one sampled Gibbs sweep (ideal sampler)."""
    x = np.asarray(data, dtype=np.float64)
    rng = make_stream(seed, 0).generator()
    ph = sigmoid(x @ m.W + m.b_h)
    h = (rng.random(ph.shape) < ph).astype(np.float64)
    pv = sigmoid(h @ m.W.T + m.b_v)
    v = (rng.random(pv.shape) < pv).astype(np.float64)
    return float(np.abs(x - v).mean())
