"""Composite loss layer: simplex-weighted loss mixing and its gradients.

Training objectives built from several loss terms combine them linearly,
``L = sum_i lam_i * l_i``. Here the weights are parameterized as
``lam = softmax(mu)`` over learnable exponents ``mu``, which keeps every
weight strictly positive, normalizes them to sum to one (so adding terms
never rescales the objective), and leaves the exponents free for plain
gradient descent. Index 0 is the basic task loss; its exponent stays
frozen at zero, so only the exponents of the auxiliary terms move.

All operations are pure functions of 1-D float64 vectors. Exponential
sums subtract the running maximum before exponentiating so that large
exponents cannot overflow; the shared shift cancels in every ratio.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "BASIC_INDEX",
    "HPExponents",
    "LossWeights",
    "LossVector",
    "softmax_weights",
    "composite_loss",
    "hp_gradient_empirical",
    "naive_exp_gradient",
    "regularizer_value",
    "regularizer_gradient",
]

# Index of the basic loss term, whose exponent is pinned to zero.
BASIC_INDEX = 0


def _as_vector(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector, got shape {arr.shape}")
    return arr


def _frozen_copy(arr: np.ndarray) -> np.ndarray:
    out = arr.copy()
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class HPExponents:
    """Log-space loss-weight exponents; entry 0 is pinned to zero.

    A vector of length K+1 for one basic plus K >= 1 auxiliary terms.
    Only relative exponents matter to the weight mapping, so the basic
    entry carries no degree of freedom and must be exactly 0.
    """

    mu: np.ndarray

    def __post_init__(self):
        mu = _as_vector(self.mu, "mu")
        if mu.size < 2:
            raise ValueError("need at least one auxiliary term (length >= 2)")
        if not np.all(np.isfinite(mu)):
            raise ValueError("exponents must be finite")
        if mu[BASIC_INDEX] != 0.0:
            raise ValueError("exponent of the basic loss must be 0")
        object.__setattr__(self, "mu", _frozen_copy(mu))

    @classmethod
    def from_auxiliary(cls, aux) -> "HPExponents":
        """Build from the K free auxiliary exponents, prepending the basic 0."""
        aux = _as_vector(aux, "aux")
        return cls(np.concatenate(([0.0], aux)))

    @property
    def n_aux(self) -> int:
        return self.mu.size - 1

    def __len__(self) -> int:
        return self.mu.size


@dataclass(frozen=True)
class LossWeights:
    """Strictly positive per-term weights that sum to one."""

    lam: np.ndarray

    def __post_init__(self):
        lam = _as_vector(self.lam, "lam")
        if lam.size < 2:
            raise ValueError("need at least two weights")
        if not np.all(np.isfinite(lam)):
            raise ValueError("weights must be finite")
        if np.any(lam <= 0.0):
            raise ValueError("weights must be strictly positive")
        if abs(float(lam.sum()) - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1 within 1e-12, got {lam.sum()!r}")
        object.__setattr__(self, "lam", _frozen_copy(lam))

    def __len__(self) -> int:
        return self.lam.size


@dataclass(frozen=True)
class LossVector:
    """Batch-mean loss values per term; names[0] is the basic task loss."""

    values: np.ndarray
    names: tuple[str, ...] = ()

    def __post_init__(self):
        values = _as_vector(self.values, "values")
        if values.size < 1:
            raise ValueError("need at least one loss value")
        if not np.all(np.isfinite(values)):
            raise ValueError(f"loss values must be finite, got {values!r}")
        names = tuple(self.names) if self.names else tuple(f"l_{i}" for i in range(values.size))
        if len(names) != values.size:
            raise ValueError(f"{len(names)} names for {values.size} values")
        object.__setattr__(self, "values", _frozen_copy(values))
        object.__setattr__(self, "names", names)

    def __len__(self) -> int:
        return self.values.size


def softmax_weights(mu: HPExponents) -> LossWeights:
    """Map exponents to mixture weights, ``exp(mu_i) / sum_j exp(mu_j)``.

    Invariant under adding a constant to every exponent; always returns
    a strictly positive vector summing to one.
    """
    z = mu.mu - mu.mu.max()
    e = np.exp(z)
    return LossWeights(e / e.sum())


def composite_loss(weights: LossWeights, losses: LossVector) -> float:
    """Weighted sum of the loss terms: the scalar training objective."""
    lam, l = weights.lam, losses.values
    if lam.size != l.size:
        raise ValueError(f"length mismatch: {lam.size} weights vs {l.size} losses")
    return float(lam @ l)


def hp_gradient_empirical(mu: HPExponents, losses: LossVector) -> np.ndarray:
    """Gradient of the weighted training loss w.r.t. each exponent.

    Entry i (i >= 1) is

        exp(mu_i) * sum_{j != i} (l_i - l_j) exp(mu_j) / (sum_j exp(mu_j))^2

    which can take either sign: a term whose loss sits above the current
    weighted level is pushed down, one below it is pushed up. Entry 0 is
    returned as exactly 0 because the basic exponent never moves.
    """
    l = losses.values
    m = mu.mu
    if m.size != l.size:
        raise ValueError(f"length mismatch: {m.size} exponents vs {l.size} losses")
    e = np.exp(m - m.max())  # shared shift cancels between numerator and denominator
    denom = e.sum() ** 2
    diffs = l[:, None] - l[None, :]  # diffs[i, j] = l_i - l_j; the j == i addend is 0
    grad = e * (diffs @ e) / denom
    grad[BASIC_INDEX] = 0.0
    return grad


def naive_exp_gradient(mu: HPExponents, losses: LossVector) -> np.ndarray:
    """Exponent gradient under plain un-normalized exponential weights.

    Without the normalizing denominator the gradient is exp(mu_i) * l_i,
    strictly positive whenever every loss value is positive, so every
    update would shrink every weight toward zero. Kept as the testable
    counter-example that the simplex weighting exists to fix.
    """
    l = losses.values
    m = mu.mu
    if m.size != l.size:
        raise ValueError(f"length mismatch: {m.size} exponents vs {l.size} losses")
    if np.any(l <= 0.0):
        raise ValueError("loss values must be strictly positive for the naive form")
    return np.exp(m) * l


def _softplus(x: np.ndarray) -> np.ndarray:
    # max(x, 0) + log1p(exp(-|x|)) never overflows
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))


def regularizer_value(mu: HPExponents, rho: float) -> float:
    """Exponent regularizer: rho * (negated weight entropy + softplus terms).

    The entropy part favors weights spread evenly over the loss terms;
    the softplus part, summed over the auxiliary exponents only, bounds
    how far any exponent can grow. Exactly linear in rho.
    """
    if not rho > 0.0:  # also rejects NaN
        raise ValueError(f"rho must be > 0, got {rho!r}")
    m = mu.mu
    z = m - m.max()
    e = np.exp(z)
    total = e.sum()
    log_p = z - np.log(total)
    neg_entropy = float((e / total) @ log_p)
    return rho * (neg_entropy + float(_softplus(m[1:]).sum()))


def regularizer_gradient(mu: HPExponents) -> np.ndarray:
    """Gradient of the exponent regularizer at unit decay strength.

    Entry i (i >= 1) combines the entropy part,

        exp(mu_i) * sum_j exp(mu_j) (mu_i - mu_j) / (sum_j exp(mu_j))^2,

    with the softplus part sigmoid(mu_i); entry 0 is exactly 0. The
    decay factor rho is applied once, by the optimizer update, so this
    function stays rho-free.
    """
    m = mu.mu
    e = np.exp(m - m.max())
    denom = e.sum() ** 2
    pair = m[:, None] - m[None, :]  # pair[i, j] = mu_i - mu_j
    grad = e * (pair @ e) / denom + _sigmoid(m)
    grad[BASIC_INDEX] = 0.0
    return grad
