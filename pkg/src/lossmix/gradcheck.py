"""Finite-difference oracles for every analytic gradient in the package.

The oracle side only ever calls scalar *value* functions (weighted loss,
regularizer value, model losses), never the analytic gradient code it
checks. Per trial, the relative error is the largest entrywise
difference measured against the largest gradient entry of that trial
(analytic or numeric, floored at 1e-8), so near-zero components cannot
spuriously dominate while genuinely wrong entries still register.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .losses import HPExponents, LossVector, LossWeights, composite_loss, hp_gradient_empirical
from .losses import regularizer_gradient, regularizer_value, softmax_weights
from .models import eval_losses, eval_param_gradient, make_synthetic_dataset, take

__all__ = [
    "GradCheckReport",
    "central_fd",
    "check_hp_gradients",
    "check_reg_gradients",
    "check_model_gradients",
]

ERROR_FLOOR = 1e-8


@dataclass(frozen=True)
class GradCheckReport:
    """Aggregate of an analytic-vs-numeric comparison over random trials."""

    name: str
    n_trials: int
    tolerance: float
    max_relative_error: float
    max_absolute_error: float
    worst_index: int
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def central_fd(fn, x, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function of a vector.

    Entry i is (fn(x + h e_i) - fn(x - h e_i)) / (2 h).
    """
    if not h > 0.0:
        raise ValueError(f"h must be > 0, got {h!r}")
    x = np.asarray(x, dtype=np.float64)
    grad = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xp[i] += h
        xm = x.copy()
        xm[i] -= h
        fp = float(fn(xp))
        fm = float(fn(xm))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError(f"non-finite function value near coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * h)
    return grad


def _aggregate(name, n_trials, tol, trials) -> GradCheckReport:
    """Fold (analytic, numeric) gradient pairs into a report."""
    max_rel = 0.0
    max_abs = 0.0
    worst = -1
    for analytic, numeric in trials:
        diff = np.abs(analytic - numeric)
        denom = max(float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))), ERROR_FLOOR)
        rel = float(diff.max()) / denom
        if rel > max_rel:
            max_rel = rel
            worst = int(np.argmax(diff))
        max_abs = max(max_abs, float(diff.max()))
    return GradCheckReport(
        name=name,
        n_trials=n_trials,
        tolerance=tol,
        max_relative_error=max_rel,
        max_absolute_error=max_abs,
        worst_index=worst,
        passed=max_rel < tol,
    )


def check_hp_gradients(
    n_trials: int = 100,
    k_range=(1, 2, 3, 4, 5),
    tol: float = 1e-6,
    h: float = 1e-6,
    seed: int = 0,
) -> GradCheckReport:
    """Exponent gradient of the weighted loss vs central differences.

    Exponents are drawn N(0, 2^2) to exercise the max-subtraction paths;
    losses are |N(0,1)| + 0.1. Differences are taken over the free
    (auxiliary) coordinates only, since the basic exponent is frozen.
    """
    rng = np.random.default_rng(seed)
    k_range = tuple(k_range)

    def trials():
        for _ in range(n_trials):
            k = int(rng.choice(k_range))
            aux = rng.normal(0.0, 2.0, size=k)
            losses = LossVector(np.abs(rng.normal(size=k + 1)) + 0.1)
            analytic = hp_gradient_empirical(HPExponents.from_auxiliary(aux), losses)[1:]

            def weighted(free, losses=losses):
                mu = HPExponents.from_auxiliary(free)
                return composite_loss(softmax_weights(mu), losses)

            yield analytic, central_fd(weighted, aux, h)

    return _aggregate("hp_gradient_empirical", n_trials, tol, trials())


def check_reg_gradients(
    n_trials: int = 100,
    k_range=(1, 2, 3, 4, 5),
    tol: float = 1e-6,
    h: float = 1e-6,
    seed: int = 0,
) -> GradCheckReport:
    """Regularizer gradient vs central differences of its unit-strength value."""
    rng = np.random.default_rng(seed)
    k_range = tuple(k_range)

    def trials():
        for _ in range(n_trials):
            k = int(rng.choice(k_range))
            aux = rng.normal(0.0, 2.0, size=k)
            analytic = regularizer_gradient(HPExponents.from_auxiliary(aux))[1:]

            def value(free):
                return regularizer_value(HPExponents.from_auxiliary(free), 1.0)

            yield analytic, central_fd(value, aux, h)

    return _aggregate("regularizer_gradient", n_trials, tol, trials())


def check_model_gradients(
    model,
    n_trials: int = 50,
    tol: float = 1e-5,
    h: float = 1e-6,
    seed: int = 0,
    batch_size: int = 16,
) -> GradCheckReport:
    """Model parameter gradient vs central differences of the weighted loss.

    Each trial draws fresh parameters, a random simplex weight vector,
    and a random mini-batch from a dataset generated off the model spec.
    """
    rng = np.random.default_rng(seed)
    pool, _ = make_synthetic_dataset(model.spec, seed, max(batch_size * 8, 64), 1)
    n_terms = len(model.loss_names)

    def trials():
        for _ in range(n_trials):
            w = model.init_params(rng) + 0.2 * rng.normal(size=model.n_params)
            lam = rng.dirichlet(np.ones(n_terms))
            lam = np.maximum(lam, 1e-9)
            lam = lam / lam.sum()
            weights = LossWeights(lam)
            batch = take(pool, rng.choice(len(pool), size=batch_size, replace=False))
            analytic = eval_param_gradient(model, w, batch, weights)

            def weighted(wv, weights=weights, batch=batch):
                return composite_loss(weights, eval_losses(model, wv, batch))

            yield analytic, central_fd(weighted, w, h)

    return _aggregate(f"param_gradient[{model.spec.kind}]", n_trials, tol, trials())
