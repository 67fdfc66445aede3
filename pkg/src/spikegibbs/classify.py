"""Label inference with a joint pixel+label RBM under a chosen sampler."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .data_io import LabeledDataset, add_noise
from .errors import ParameterError
from .rbm import Model, SamplerKind, iterate_chains

IMAGE_BATCH = 100


@dataclass(frozen=True)
class ClassifyConfig:
    sampler: SamplerKind
    n_gibbs: int = 10
    seed: int = 0
    n_classes: int = 10

    def __post_init__(self):
        if self.n_gibbs < 1:
            raise ParameterError(f"n_gibbs must be >= 1, got {self.n_gibbs}")


def _check_dims(q: Model, n_pixels: int, cfg: ClassifyConfig):
    if q.n_visible != n_pixels + cfg.n_classes:
        raise ParameterError(
            f"model has {q.n_visible} visible units; expected {n_pixels} pixels "
            f"+ {cfg.n_classes} labels")


def label_votes(q: Model, images, cfg: ClassifyConfig, first_index: int = 0) -> np.ndarray:
    """Per-image count of sweeps in which each label unit was sampled on.

    Pixels are clamped, labels start at 0.  Image ``first_index + i`` runs
    as chain ``first_index + i``, so results do not depend on batching.
    """
    images = np.asarray(images, dtype=np.int64)
    n, n_pixels = images.shape
    _check_dims(q, n_pixels, cfg)
    init = np.hstack([images, np.zeros((n, cfg.n_classes), dtype=np.int64)])
    mask = np.zeros(q.n_visible, dtype=bool)
    mask[:n_pixels] = True
    votes = np.zeros((n, cfg.n_classes), dtype=np.int64)
    chains = range(first_index, first_index + n)
    for v, _ in iterate_chains(q, init, cfg.n_gibbs, cfg.sampler, mask, cfg.seed, chains):
        votes += v[:, n_pixels:]
    return votes


def classify_one(q: Model, image, cfg: ClassifyConfig, image_index: int = 0) -> int:
    votes = label_votes(q, np.asarray(image).reshape(1, -1), cfg, image_index)
    return int(np.argmax(votes[0]))  # argmax picks the lowest index on ties


def predict(q: Model, ds: LabeledDataset, cfg: ClassifyConfig) -> np.ndarray:
    preds = np.empty(len(ds), dtype=np.int64)
    for start in range(0, len(ds), IMAGE_BATCH):
        votes = label_votes(q, ds.images[start:start + IMAGE_BATCH], cfg, start)
        preds[start:start + votes.shape[0]] = np.argmax(votes, axis=1)
    return preds


@dataclass
class Evaluation:
    accuracy: float
    confusion: np.ndarray  # rows: true label, columns: predicted
    predictions: np.ndarray

    def predictions_csv(self, labels) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["image", "label", "predicted"])
        for i, (t, p) in enumerate(zip(labels, self.predictions)):
            w.writerow([i, int(t), int(p)])
        return buf.getvalue()


def evaluate(q: Model, ds: LabeledDataset, cfg: ClassifyConfig) -> Evaluation:
    if len(ds) == 0:
        raise ParameterError("cannot evaluate on an empty dataset")
    preds = predict(q, ds, cfg)
    confusion = np.zeros((cfg.n_classes, cfg.n_classes), dtype=np.int64)
    np.add.at(confusion, (ds.labels, preds), 1)
    return Evaluation(float(np.mean(preds == ds.labels)), confusion, preds)


def noise_sweep(q: Model, ds: LabeledDataset, cfg: ClassifyConfig, kind: str,
                factors, noise_seed: int | None = None) -> list:
    """Accuracy on a freshly corrupted copy of ``ds`` per noise factor.

    Returns ``[(factor, accuracy), ...]``.  The corruption seed defaults to
    the classification seed.
    """
    rows = []
    noise_seed = cfg.seed if noise_seed is None else noise_seed
    for f in factors:
        if not 0.0 <= f <= 1.0:
            raise ParameterError(f"noise factor {f} outside [0, 1]")
        noisy = add_noise(ds, kind, f, noise_seed)
        rows.append((float(f), evaluate(q, noisy, cfg).accuracy))
    return rows
