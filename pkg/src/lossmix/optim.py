"""Joint update rules for model parameters and loss-weight exponents.

Two step families are provided: SGD with momentum and decoupled weight
decay, and AdamW. In both, the loss-weight exponents receive the same
treatment as the regular parameters, with two twists: the exponent
regularizer enters the update decoupled from the momentum buffers,
scaled once by the decay factor ``hp_decay``, and index 0 (the basic
loss) never moves because its gradient entries are identically zero.

Step functions are pure: they validate their inputs, never mutate the
incoming states, and return fresh state objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .losses import BASIC_INDEX, HPExponents, regularizer_gradient

__all__ = [
    "OptimizerConfig",
    "ParamState",
    "HPState",
    "TrainingDiverged",
    "init_param_state",
    "init_hp_state",
    "schedule_multiplier",
    "sgdw_step",
    "adamw_step",
]

SCHEDULES = ("constant", "cosine", "step")


class TrainingDiverged(RuntimeError):
    """A non-finite value appeared in a gradient or an updated state."""

    def __init__(self, step: int, what: str):
        super().__init__(f"training diverged at step {step}: {what}")
        self.step = step


@dataclass(frozen=True)
class OptimizerConfig:
    """Shared knobs for both step families.

    ``alpha`` is the base learning rate and ``lr_scale`` an extra
    multiplier on it (useful to replicate a baseline whose un-normalized
    weights summed to something other than one). ``hp_decay`` scales the
    exponent regularizer; 0 turns it off. ``beta2`` and ``adam_eps``
    only matter for the AdamW steps.
    """

    alpha: float
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.0
    hp_decay: float = 0.5
    init_epsilon: float = 0.1
    schedule: str = "constant"
    milestones: tuple[int, ...] = ()
    step_factor: float = 0.1
    total_steps: int = 5000
    lr_scale: float = 1.0
    grad_clip: float = 0.0
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not self.alpha > 0.0:
            raise ValueError(f"alpha must be > 0, got {self.alpha!r}")
        if not 0.0 <= self.beta1 < 1.0:
            raise ValueError(f"beta1 must be in [0, 1), got {self.beta1!r}")
        if not 0.0 <= self.beta2 < 1.0:
            raise ValueError(f"beta2 must be in [0, 1), got {self.beta2!r}")
        if self.weight_decay < 0.0:
            raise ValueError("weight_decay must be >= 0")
        if self.hp_decay < 0.0:
            raise ValueError("hp_decay must be >= 0")
        if not self.init_epsilon > 0.0:
            raise ValueError(f"init_epsilon must be > 0, got {self.init_epsilon!r}")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}, got {self.schedule!r}")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")
        if not self.lr_scale > 0.0:
            raise ValueError("lr_scale must be > 0")
        if self.grad_clip < 0.0:
            raise ValueError("grad_clip must be >= 0")
        object.__setattr__(self, "milestones", tuple(int(m) for m in self.milestones))

    @property
    def effective_alpha(self) -> float:
        return self.alpha * self.lr_scale


@dataclass
class ParamState:
    """Model parameter vector with its optimizer moment buffers."""

    w: np.ndarray
    m: np.ndarray
    v: np.ndarray  # second moment, used by the AdamW step only
    step: int = 0


@dataclass
class HPState:
    """Loss-weight exponents with their optimizer moment buffers.

    ``n`` is the first moment on the exponent gradient; its basic entry
    stays zero because no gradient ever flows to the frozen exponent.
    """

    mu: HPExponents
    n: np.ndarray
    v: np.ndarray
    step: int = 0


def init_param_state(w0) -> ParamState:
    w = np.asarray(w0, dtype=np.float64).copy()
    if not np.all(np.isfinite(w)):
        raise ValueError("initial parameters must be finite")
    return ParamState(w=w, m=np.zeros_like(w), v=np.zeros_like(w), step=0)


def init_hp_state(n_aux: int, epsilon: float) -> HPState:
    """Uniform start: every auxiliary exponent at log(epsilon), moments zero."""
    if n_aux < 1:
        raise ValueError("need at least one auxiliary loss term")
    if not epsilon > 0.0:
        raise ValueError(f"epsilon must be > 0, got {epsilon!r}")
    mu = HPExponents.from_auxiliary(np.full(n_aux, math.log(epsilon)))
    zeros = np.zeros(n_aux + 1)
    return HPState(mu=mu, n=zeros.copy(), v=zeros.copy(), step=0)


def schedule_multiplier(t: int, config: OptimizerConfig) -> float:
    """Learning-rate multiplier at step t (1-based, within the step budget)."""
    if not 1 <= t <= config.total_steps:
        raise ValueError(f"step {t} outside [1, {config.total_steps}]")
    if config.schedule == "constant":
        return 1.0
    if config.schedule == "cosine":
        return 0.5 * (1.0 + math.cos(math.pi * t / config.total_steps))
    return config.step_factor ** sum(1 for m in config.milestones if t > m)


def _clipped(g: np.ndarray, limit: float) -> np.ndarray:
    if limit <= 0.0:
        return g
    norm = float(np.linalg.norm(g))
    if norm > limit:
        return g * (limit / norm)
    return g


def _validated(params: ParamState, hps: HPState, g, h, t: int):
    g = np.asarray(g, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if g.shape != params.w.shape:
        raise ValueError(f"parameter gradient shape {g.shape} != {params.w.shape}")
    if h.shape != hps.mu.mu.shape:
        raise ValueError(f"exponent gradient shape {h.shape} != {hps.mu.mu.shape}")
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(h))):
        raise TrainingDiverged(t, "non-finite gradient")
    if h[BASIC_INDEX] != 0.0:
        raise ValueError("gradient entry for the frozen basic exponent must be 0")
    return g, h


# beyond this magnitude exp(mu) under/overflows and the weight mapping degenerates
MU_LIMIT = 700.0


def _check_state(w: np.ndarray, mu: np.ndarray, t: int):
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(mu))):
        raise TrainingDiverged(t, "non-finite state after update")
    if np.any(np.abs(mu) > MU_LIMIT):
        raise TrainingDiverged(t, "exponent left the representable range")


def sgdw_step(
    params: ParamState,
    hps: HPState,
    g,
    h,
    t: int,
    config: OptimizerConfig,
) -> tuple[ParamState, HPState]:
    """One joint SGDW-with-momentum update.

    With eta the schedule multiplier and a the effective learning rate:

        m  <- beta1 m + eta a g          n  <- beta1 n + eta a h
        w  <- w - m - eta a wd w         mu <- mu - n - eta a rho dR(mu)

    where dR is the unit-strength regularizer gradient at the previous
    exponents and rho = ``hp_decay``.
    """
    g, h = _validated(params, hps, g, h, t)
    eta = schedule_multiplier(t, config)
    a = config.effective_alpha
    g = _clipped(g, config.grad_clip)
    h = _clipped(h, config.grad_clip)

    m_new = config.beta1 * params.m + eta * a * g
    w_new = params.w - m_new - eta * a * config.weight_decay * params.w

    n_new = config.beta1 * hps.n + eta * a * h
    mu_new = hps.mu.mu - n_new - eta * a * config.hp_decay * regularizer_gradient(hps.mu)

    _check_state(w_new, mu_new, t)
    return (
        ParamState(w=w_new, m=m_new, v=params.v, step=params.step + 1),
        HPState(mu=HPExponents(mu_new), n=n_new, v=hps.v, step=hps.step + 1),
    )


def adamw_step(
    params: ParamState,
    hps: HPState,
    g,
    h,
    t: int,
    config: OptimizerConfig,
) -> tuple[ParamState, HPState]:
    """One joint AdamW update with bias correction on both moment pairs.

    Weight decay on ``w`` and the exponent regularizer on ``mu`` both
    enter decoupled from the adaptive part, each scaled by eta * alpha.
    """
    g, h = _validated(params, hps, g, h, t)
    eta = schedule_multiplier(t, config)
    a = config.effective_alpha
    eps = config.adam_eps
    g = _clipped(g, config.grad_clip)
    h = _clipped(h, config.grad_clip)

    ps = params.step + 1
    m_new = config.beta1 * params.m + (1.0 - config.beta1) * g
    v_new = config.beta2 * params.v + (1.0 - config.beta2) * g * g
    m_hat = m_new / (1.0 - config.beta1 ** ps)
    v_hat = v_new / (1.0 - config.beta2 ** ps)
    w_new = (
        params.w
        - eta * a * m_hat / (np.sqrt(v_hat) + eps)
        - eta * a * config.weight_decay * params.w
    )

    hs = hps.step + 1
    n_new = config.beta1 * hps.n + (1.0 - config.beta1) * h
    u_new = config.beta2 * hps.v + (1.0 - config.beta2) * h * h
    n_hat = n_new / (1.0 - config.beta1 ** hs)
    u_hat = u_new / (1.0 - config.beta2 ** hs)
    mu_new = (
        hps.mu.mu
        - eta * a * n_hat / (np.sqrt(u_hat) + eps)
        - eta * a * config.hp_decay * regularizer_gradient(hps.mu)
    )

    _check_state(w_new, mu_new, t)
    return (
        ParamState(w=w_new, m=m_new, v=v_new, step=ps),
        HPState(mu=HPExponents(mu_new), n=n_new, v=u_new, step=hs),
    )
