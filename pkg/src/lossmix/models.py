"""Desk-scale multi-loss models with hand-derived parameter gradients.

Each model exposes one basic loss plus two auxiliary terms built so
that one is helpful and one is harmful by construction:

* ``consistency`` penalizes prediction (or hidden-feature) differences
  between clean and jittered copies of the inputs. It acts like a weak
  data-driven smoothness/ridge regularizer, so some weight on it helps
  generalization on the overfit-prone splits generated here.
* ``noise_fit`` regresses onto a fixed random target channel that is
  statistically independent of the real targets. Any weight on it
  injects pure noise into the parameter updates and only hurts.

Gradients are coded by hand from the closed forms (no autodiff), which
keeps the finite-difference oracle in ``gradcheck`` an independent
check rather than a tautology.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .losses import LossVector, LossWeights

__all__ = [
    "LINEAR_KIND",
    "MLP_KIND",
    "MODEL_KINDS",
    "ToyModelSpec",
    "Dataset",
    "make_synthetic_dataset",
    "build_model",
    "LinearMultiLossModel",
    "ConsistencyMLPModel",
    "DuplicatedTermModel",
    "BatchSampler",
    "take",
    "eval_losses",
    "eval_param_gradient",
    "dataset_to_csv",
    "dataset_from_csv",
]

LINEAR_KIND = "multiloss_linear_regression"
MLP_KIND = "tiny_mlp_consistency"
MODEL_KINDS = (LINEAR_KIND, MLP_KIND)


@dataclass(frozen=True)
class ToyModelSpec:
    """Which model to build and the knobs of its synthetic data.

    ``duplicate_term`` appends an exact copy of the given auxiliary
    term (1-based loss index) for symmetry studies; 0 disables it.
    """

    kind: str = LINEAR_KIND
    n_features: int = 16
    hidden_units: int = 16
    noise_std: float = 0.5
    jitter_std: float = 0.5
    harm_scale: float = 3.0
    duplicate_term: int = 0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}, expected one of {MODEL_KINDS}")
        if self.n_features < 1:
            raise ValueError("n_features must be >= 1")
        if self.hidden_units < 1:
            raise ValueError("hidden_units must be >= 1")
        if self.noise_std < 0 or self.jitter_std < 0 or self.harm_scale < 0:
            raise ValueError("noise_std, jitter_std and harm_scale must be >= 0")
        if self.duplicate_term not in (0, 1, 2):
            raise ValueError("duplicate_term must be 0 (off), 1 or 2")


@dataclass(frozen=True)
class Dataset:
    """One split of a synthetic task, reproducible from its seed.

    ``jittered`` holds the fixed perturbed copy of ``inputs`` used by
    the consistency term; ``noise_targets`` the fixed random channel
    used by the harmful term.
    """

    inputs: np.ndarray
    jittered: np.ndarray
    targets: np.ndarray
    noise_targets: np.ndarray
    split: str
    seed: int

    def __post_init__(self):
        if self.split not in ("train", "validation"):
            raise ValueError(f"split must be 'train' or 'validation', got {self.split!r}")
        n = self.inputs.shape[0]
        if n < 1:
            raise ValueError("dataset must contain at least one sample")
        if self.jittered.shape != self.inputs.shape:
            raise ValueError("jittered inputs must match inputs shape")
        if self.targets.shape[0] != n or self.noise_targets.shape[0] != n:
            raise ValueError("target channels must match the number of samples")

    def __len__(self) -> int:
        return self.inputs.shape[0]


def take(dataset: Dataset, idx) -> Dataset:
    """Row subset as a new Dataset (used for mini-batching)."""
    return Dataset(
        inputs=dataset.inputs[idx],
        jittered=dataset.jittered[idx],
        targets=dataset.targets[idx],
        noise_targets=dataset.noise_targets[idx],
        split=dataset.split,
        seed=dataset.seed,
    )


def make_synthetic_dataset(
    spec: ToyModelSpec, seed: int, n_train: int, n_val: int
) -> tuple[Dataset, Dataset]:
    """Generate matched train/validation splits for a model spec.

    The ground truth (linear map, or class direction) is drawn once and
    shared by both splits; everything is a deterministic function of
    (spec, seed, sizes).
    """
    if n_train < 1 or n_val < 1:
        raise ValueError("n_train and n_val must be >= 1")
    rng = np.random.default_rng(seed)
    d = spec.n_features

    if spec.kind == LINEAR_KIND:
        # unit signal variance regardless of d, so loss scales stay O(1)
        w_true = rng.normal(0.0, 1.0, size=d) / np.sqrt(d)

        def draw(n: int, split: str) -> Dataset:
            x = rng.normal(size=(n, d))
            y = x @ w_true + spec.noise_std * rng.normal(size=n)
            xj = x + spec.jitter_std * rng.normal(size=(n, d))
            r = spec.harm_scale * rng.normal(size=n)
            return Dataset(x, xj, y, r, split, seed)

    else:
        direction = rng.normal(size=d)
        direction = direction / np.linalg.norm(direction)

        def draw(n: int, split: str) -> Dataset:
            labels = rng.integers(0, 2, size=n)
            x = rng.normal(size=(n, d)) + (2.0 * labels - 1.0)[:, None] * direction
            xj = x + spec.jitter_std * rng.normal(size=(n, d))
            r = spec.harm_scale * rng.normal(size=n)
            return Dataset(x, xj, labels.astype(np.float64), r, split, seed)

    return draw(n_train, "train"), draw(n_val, "validation")


class LinearMultiLossModel:
    """Linear predictor with mse / consistency / noise_fit loss terms."""

    loss_names = ("mse", "consistency", "noise_fit")

    def __init__(self, spec: ToyModelSpec):
        self.spec = spec
        self.n_params = spec.n_features

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        return rng.normal(0.0, 0.1, size=self.n_params)

    def losses(self, w: np.ndarray, batch: Dataset) -> np.ndarray:
        p = batch.inputs @ w
        pj = batch.jittered @ w
        l0 = np.mean((p - batch.targets) ** 2)
        l1 = np.mean((p - pj) ** 2)
        l2 = np.mean((p - batch.noise_targets) ** 2)
        return np.array([l0, l1, l2])

    def param_gradient(self, w: np.ndarray, batch: Dataset, lam: np.ndarray) -> np.ndarray:
        n = len(batch)
        p = batch.inputs @ w
        diff = batch.inputs - batch.jittered
        g0 = (2.0 / n) * batch.inputs.T @ (p - batch.targets)
        g1 = (2.0 / n) * diff.T @ (diff @ w)
        g2 = (2.0 / n) * batch.inputs.T @ (p - batch.noise_targets)
        return lam[0] * g0 + lam[1] * g1 + lam[2] * g2


class ConsistencyMLPModel:
    """One-hidden-layer tanh classifier with consistency and noise-head terms.

    The parameter vector packs [W1 (d,H), b1 (H), W2 (H,2), b2 (2),
    U (H,), c] in that order. Losses: cross-entropy on two classes,
    elementwise mean squared difference between clean and jittered
    hidden activations, and mean squared error of a linear head that
    regresses the hidden activations onto the random target channel.
    """

    loss_names = ("cross_entropy", "consistency", "noise_fit")

    def __init__(self, spec: ToyModelSpec):
        self.spec = spec
        d, hd = spec.n_features, spec.hidden_units
        self.d = d
        self.h = hd
        self.n_params = d * hd + hd + hd * 2 + 2 + hd + 1

    def _unpack(self, w: np.ndarray):
        d, hd = self.d, self.h
        i = 0
        w1 = w[i : i + d * hd].reshape(d, hd)
        i += d * hd
        b1 = w[i : i + hd]
        i += hd
        w2 = w[i : i + hd * 2].reshape(hd, 2)
        i += hd * 2
        b2 = w[i : i + 2]
        i += 2
        u = w[i : i + hd]
        i += hd
        c = w[i]
        return w1, b1, w2, b2, u, c

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        d, hd = self.d, self.h
        w1 = rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, hd))
        w2 = rng.normal(0.0, 1.0 / np.sqrt(hd), size=(hd, 2))
        u = rng.normal(0.0, 1.0 / np.sqrt(hd), size=hd)
        return np.concatenate([w1.ravel(), np.zeros(hd), w2.ravel(), np.zeros(2), u, [0.0]])

    def _hidden(self, w1, b1, x):
        return np.tanh(x @ w1 + b1)

    def losses(self, w: np.ndarray, batch: Dataset) -> np.ndarray:
        w1, b1, w2, b2, u, c = self._unpack(w)
        a1 = self._hidden(w1, b1, batch.inputs)
        a1j = self._hidden(w1, b1, batch.jittered)
        logits = a1 @ w2 + b2
        zs = logits - logits.max(axis=1, keepdims=True)
        logz = np.log(np.exp(zs).sum(axis=1))
        y = batch.targets.astype(int)
        n = len(batch)
        l0 = float(np.mean(logz - zs[np.arange(n), y]))
        l1 = float(np.mean((a1 - a1j) ** 2))
        pred = a1 @ u + c
        l2 = float(np.mean((pred - batch.noise_targets) ** 2))
        return np.array([l0, l1, l2])

    def param_gradient(self, w: np.ndarray, batch: Dataset, lam: np.ndarray) -> np.ndarray:
        w1, b1, w2, b2, u, c = self._unpack(w)
        x, xj = batch.inputs, batch.jittered
        n = len(batch)
        a1 = self._hidden(w1, b1, x)
        a1j = self._hidden(w1, b1, xj)

        # cross-entropy head
        logits = a1 @ w2 + b2
        zs = logits - logits.max(axis=1, keepdims=True)
        ez = np.exp(zs)
        probs = ez / ez.sum(axis=1, keepdims=True)
        onehot = np.zeros_like(probs)
        onehot[np.arange(n), batch.targets.astype(int)] = 1.0
        dlogits = lam[0] * (probs - onehot) / n
        dw2 = a1.T @ dlogits
        db2 = dlogits.sum(axis=0)
        da1 = dlogits @ w2.T

        # consistency head, flows through both forward passes
        diff = a1 - a1j
        scale = 2.0 / diff.size
        da1 = da1 + lam[1] * scale * diff
        da1j = -lam[1] * scale * diff

        # noise-fit regression head
        pred = a1 @ u + c
        dpred = lam[2] * (2.0 / n) * (pred - batch.noise_targets)
        du = a1.T @ dpred
        dc = dpred.sum()
        da1 = da1 + np.outer(dpred, u)

        dz1 = da1 * (1.0 - a1 * a1)
        dz1j = da1j * (1.0 - a1j * a1j)
        dw1 = x.T @ dz1 + xj.T @ dz1j
        db1 = dz1.sum(axis=0) + dz1j.sum(axis=0)

        return np.concatenate([dw1.ravel(), db1, dw2.ravel(), db2, du, [dc]])


class DuplicatedTermModel:
    """Wraps a model, appending an exact copy of one auxiliary loss term."""

    def __init__(self, base, index: int):
        if not 1 <= index < len(base.loss_names):
            raise ValueError(f"duplicate index {index} out of range for {base.loss_names}")
        self.base = base
        self.index = index
        self.loss_names = tuple(base.loss_names) + (base.loss_names[index] + "_dup",)
        self.n_params = base.n_params
        self.spec = base.spec

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        return self.base.init_params(rng)

    def losses(self, w: np.ndarray, batch: Dataset) -> np.ndarray:
        l = self.base.losses(w, batch)
        return np.append(l, l[self.index])

    def param_gradient(self, w: np.ndarray, batch: Dataset, lam: np.ndarray) -> np.ndarray:
        folded = np.array(lam[:-1], dtype=np.float64)
        folded[self.index] += lam[-1]
        return self.base.param_gradient(w, batch, folded)


def build_model(spec: ToyModelSpec):
    model = LinearMultiLossModel(spec) if spec.kind == LINEAR_KIND else ConsistencyMLPModel(spec)
    if spec.duplicate_term:
        model = DuplicatedTermModel(model, spec.duplicate_term)
    return model


def eval_losses(model, w, batch: Dataset) -> LossVector:
    """Batch-mean loss terms as a typed vector; rejects non-finite results."""
    w = np.asarray(w, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        raise ValueError("parameters must be finite")
    if len(batch) < 1:
        raise ValueError("batch must be non-empty")
    values = model.losses(w, batch)
    if not np.all(np.isfinite(values)):
        raise ValueError(
            f"non-finite loss values {values!r} (model={model.spec.kind}, split={batch.split})"
        )
    return LossVector(values, tuple(model.loss_names))


def eval_param_gradient(model, w, batch: Dataset, weights: LossWeights) -> np.ndarray:
    """Analytic gradient of the weighted loss w.r.t. the parameters.

    Linear in the weights by construction, so gradients for mixed
    weight vectors superpose exactly.
    """
    w = np.asarray(w, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        raise ValueError("parameters must be finite")
    if len(weights) != len(model.loss_names):
        raise ValueError(f"{len(weights)} weights for {len(model.loss_names)} loss terms")
    g = model.param_gradient(w, batch, weights.lam)
    if not np.all(np.isfinite(g)):
        raise ValueError(f"non-finite parameter gradient (model={model.spec.kind})")
    return g


class BatchSampler:
    """Sequential mini-batches with a fresh shuffle at each epoch."""

    def __init__(self, dataset: Dataset, batch_size: int, rng: np.random.Generator):
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.dataset = dataset
        self.batch_size = min(batch_size, len(dataset))
        self.rng = rng
        self._order = np.empty(0, dtype=np.intp)
        self._cursor = 0

    def next_batch(self) -> Dataset:
        if self._cursor >= len(self._order):
            self._order = self.rng.permutation(len(self.dataset))
            self._cursor = 0
        idx = self._order[self._cursor : self._cursor + self.batch_size]
        self._cursor += self.batch_size
        return take(self.dataset, idx)


def dataset_to_csv(dataset: Dataset, path) -> None:
    """Write one split to CSV (x_*, xj_*, target, noise_target, split, seed)."""
    d = dataset.inputs.shape[1]
    header = (
        [f"x_{i}" for i in range(d)]
        + [f"xj_{i}" for i in range(d)]
        + ["target", "noise_target", "split", "seed"]
    )
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(len(dataset)):
            row = (
                [repr(float(v)) for v in dataset.inputs[i]]
                + [repr(float(v)) for v in dataset.jittered[i]]
                + [repr(float(dataset.targets[i])), repr(float(dataset.noise_targets[i]))]
                + [dataset.split, str(dataset.seed)]
            )
            writer.writerow(row)


def dataset_from_csv(path) -> Dataset:
    """Inverse of :func:`dataset_to_csv`; round-trips losslessly."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: empty dataset file")
    d = sum(1 for name in header if name.startswith("x_") and not name.startswith("xj_"))
    x = np.array([[float(v) for v in row[:d]] for row in rows])
    xj = np.array([[float(v) for v in row[d : 2 * d]] for row in rows])
    y = np.array([float(row[2 * d]) for row in rows])
    r = np.array([float(row[2 * d + 1]) for row in rows])
    split = rows[0][2 * d + 2]
    seed = int(rows[0][2 * d + 3])
    return Dataset(x, xj, y, r, split, seed)
