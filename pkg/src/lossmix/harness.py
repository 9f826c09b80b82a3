"""Experiment drivers: training runs, grids, seed studies, init sweeps.

Every run is a deterministic function of (config, seed): the run seed
drives parameter initialization and batch shuffling, the data seed the
dataset. Fixed-weight runs reuse the exact same loop with zero exponent
gradients and the regularizer disabled, so their weights never move;
this makes a one-point grid bitwise identical to a fixed run.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, with_epsilon
from .losses import HPExponents, LossVector, hp_gradient_empirical, regularizer_value, softmax_weights
from .models import BatchSampler, build_model, make_synthetic_dataset
from .optim import HPState, TrainingDiverged, adamw_step, init_hp_state, init_param_state, sgdw_step

__all__ = [
    "TrajectoryRecord",
    "RunResult",
    "GridPointResult",
    "GridSearchResult",
    "SeedStudyReport",
    "InitSweepReport",
    "run_training",
    "run_grid_search",
    "run_seed_study",
    "run_init_sweep",
    "export_results",
    "import_results",
    "trajectory_columns",
    "normalize_weights",
]


@dataclass(frozen=True)
class TrajectoryRecord:
    """Snapshot taken after an update step.

    ``losses`` are the per-term batch means computed during that step
    (at the pre-update parameters); ``mu``/``lam`` are the post-update
    exponents and weights; ``composite`` and ``regularizer`` are the
    two objective parts evaluated at the recorded state.
    """

    t: int
    mu: np.ndarray
    lam: np.ndarray
    losses: np.ndarray
    composite: float
    regularizer: float
    val_basic_loss: float

    @property
    def n_terms(self) -> int:
        return self.mu.size


@dataclass
class RunResult:
    """Outcome of a single training run."""

    seed: int
    mode: str
    fixed_weights: np.ndarray | None
    initial_mu: np.ndarray
    trajectory: list[TrajectoryRecord]
    best_val: float
    best_val_step: int
    diverged: bool
    diverged_step: int | None
    wall_time: float

    @property
    def final(self) -> TrajectoryRecord | None:
        return self.trajectory[-1] if self.trajectory else None

    @property
    def final_val(self) -> float:
        return self.trajectory[-1].val_basic_loss if self.trajectory else math.inf


def normalize_weights(raw) -> np.ndarray:
    """Scale strictly positive raw weights to sum to one."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 1 or raw.size < 2:
        raise ValueError("raw weights must be a vector of length >= 2")
    if not np.all(np.isfinite(raw)) or np.any(raw <= 0.0):
        raise ValueError("raw weights must be finite and strictly positive")
    return raw / raw.sum()


def run_training(config: ExperimentConfig, seed: int) -> RunResult:
    """Run the full training loop for one seed.

    Each step: draw a mini-batch, evaluate per-term losses, form the
    mixture weights (learned via softmax of the exponents, or frozen),
    compute the analytic parameter gradient and, in learned mode, the
    exponent gradient, then apply the joint optimizer update. Validation
    (the basic loss on the held-out split) is evaluated at every
    recorded step. Divergence flags the run and preserves the partial
    trajectory instead of raising.
    """
    model = build_model(config.model)
    train, val = make_synthetic_dataset(config.model, config.data_seed, config.n_train, config.n_val)
    n_aux = len(model.loss_names) - 1
    names = tuple(model.loss_names)
    ocfg = config.optimizer

    rng = np.random.default_rng(seed)
    params = init_param_state(model.init_params(rng))

    if config.mode == "fixed":
        lam_fixed = normalize_weights(config.fixed_weights)
        if lam_fixed.size != n_aux + 1:
            raise ConfigError(f"{lam_fixed.size} fixed weights for {n_aux + 1} loss terms")
        mu0 = np.log(lam_fixed / lam_fixed[0])
        mu0[0] = 0.0
        hps = HPState(mu=HPExponents(mu0), n=np.zeros(n_aux + 1), v=np.zeros(n_aux + 1))
        step_cfg = replace(ocfg, hp_decay=0.0)  # freeze exponents entirely
    else:
        lam_fixed = None
        hps = init_hp_state(n_aux, ocfg.init_epsilon)
        step_cfg = ocfg

    step_fn = sgdw_step if config.optimizer_kind == "sgdw" else adamw_step
    sampler = BatchSampler(train, config.batch_size, rng)
    zero_h = np.zeros(n_aux + 1)

    trajectory: list[TrajectoryRecord] = []
    best_val = math.inf
    best_step = 0
    diverged = False
    diverged_step = None
    initial_mu = hps.mu.mu.copy()
    started = time.perf_counter()

    for t in range(1, ocfg.total_steps + 1):
        batch = sampler.next_batch()
        lvals = model.losses(params.w, batch)
        if not np.all(np.isfinite(lvals)):
            diverged, diverged_step = True, t
            break
        weights = softmax_weights(hps.mu)
        g = model.param_gradient(params.w, batch, weights.lam)
        if config.mode == "learned":
            h = hp_gradient_empirical(hps.mu, LossVector(lvals, names))
        else:
            h = zero_h
        try:
            params, hps = step_fn(params, hps, g, h, t, step_cfg)
        except TrainingDiverged as exc:
            diverged, diverged_step = True, exc.step
            break

        if t % config.record_every == 0 or t == ocfg.total_steps:
            lam_rec = softmax_weights(hps.mu).lam
            val_basic = float(model.losses(params.w, val)[0])
            record = TrajectoryRecord(
                t=t,
                mu=hps.mu.mu.copy(),
                lam=lam_rec,
                losses=lvals.copy(),
                composite=float(lam_rec @ lvals),
                regularizer=step_cfg.hp_decay * regularizer_value(hps.mu, 1.0),
                val_basic_loss=val_basic,
            )
            trajectory.append(record)
            if val_basic < best_val:
                best_val, best_step = val_basic, t

    return RunResult(
        seed=seed,
        mode=config.mode,
        fixed_weights=lam_fixed,
        initial_mu=initial_mu,
        trajectory=trajectory,
        best_val=best_val,
        best_val_step=best_step,
        diverged=diverged,
        diverged_step=diverged_step,
        wall_time=time.perf_counter() - started,
    )


@dataclass
class GridPointResult:
    """All seeds of one fixed-weight grid point."""

    raw_point: tuple[float, ...]
    lam: np.ndarray
    log_ratio: float | None
    runs: list[RunResult]

    @property
    def final_vals(self) -> np.ndarray:
        return np.array([r.final_val for r in self.runs if not r.diverged])

    @property
    def mean_val(self) -> float:
        vals = self.final_vals
        return float(vals.mean()) if vals.size else math.inf

    @property
    def std_val(self) -> float:
        vals = self.final_vals
        return float(vals.std(ddof=1)) if vals.size > 1 else 0.0


@dataclass
class GridSearchResult:
    points: list[GridPointResult]
    seeds: tuple[int, ...]

    @property
    def best_index(self) -> int:
        return int(np.argmin([p.mean_val for p in self.points]))

    @property
    def best_point(self) -> GridPointResult:
        return self.points[self.best_index]


def grid_points(config: ExperimentConfig):
    """Yield (raw_weights, log_ratio) for the configured grid.

    N-D grids come from the cartesian product of per-auxiliary-axis
    raw weight values, with the basic weight pinned at 1. The 1-D
    alternative places points uniformly in the log ratio of the single
    auxiliary weight to the basic weight.
    """
    if config.grid_log_ratios:
        for r in config.grid_log_ratios:
            yield (1.0, 10.0 ** r), float(r)
    elif config.grid_axes:
        for combo in itertools.product(*config.grid_axes):
            yield (1.0,) + tuple(combo), None
    else:
        raise ConfigError("grid search requires grid_axes or grid_log_ratios")


def run_grid_search(config: ExperimentConfig) -> GridSearchResult:
    """One fixed-weight run per grid point per seed; divergence is recorded, not fatal."""
    points = []
    for raw, log_ratio in grid_points(config):
        run_cfg = replace(config, mode="fixed", fixed_weights=raw)
        runs = [run_training(run_cfg, seed) for seed in config.seeds]
        points.append(
            GridPointResult(
                raw_point=raw,
                lam=normalize_weights(raw),
                log_ratio=log_ratio,
                runs=runs,
            )
        )
    if not points:
        raise ConfigError("grid is empty")
    return GridSearchResult(points=points, seeds=tuple(config.seeds))


@dataclass
class SeedStudyReport:
    """Cross-seed stability of one configuration."""

    seeds: tuple[int, ...]
    runs: list[RunResult]
    final_mu: np.ndarray        # (n_seeds, n_terms)
    final_vals: np.ndarray
    mu_spread_final: np.ndarray  # per exponent: max pairwise |difference| at the end
    mu_range: np.ndarray         # per exponent: range traversed over all runs, incl. init
    step_spread_max: np.ndarray  # per exponent: worst cross-seed spread at any recorded step

    @property
    def val_mean(self) -> float:
        return float(self.final_vals.mean())

    @property
    def val_std(self) -> float:
        return float(self.final_vals.std(ddof=1)) if self.final_vals.size > 1 else 0.0


def run_seed_study(config: ExperimentConfig, seeds=None) -> SeedStudyReport:
    """Run one configuration across seeds and measure trajectory spread."""
    seeds = tuple(seeds if seeds is not None else config.seeds)
    if len(seeds) < 2:
        raise ValueError("seed study needs at least 2 seeds")
    runs = [run_training(config, seed) for seed in seeds]
    if any(r.diverged for r in runs):
        raise TrainingDiverged(
            min(r.diverged_step or 0 for r in runs if r.diverged), "seed study run diverged"
        )
    final_mu = np.array([r.final.mu for r in runs])
    final_vals = np.array([r.final_val for r in runs])
    spread_final = final_mu.max(axis=0) - final_mu.min(axis=0)

    all_mu = np.array([[rec.mu for rec in r.trajectory] for r in runs])  # (S, T, K+1)
    inits = np.array([r.initial_mu for r in runs])
    lo = np.minimum(all_mu.min(axis=(0, 1)), inits.min(axis=0))
    hi = np.maximum(all_mu.max(axis=(0, 1)), inits.max(axis=0))
    step_spread = (all_mu.max(axis=0) - all_mu.min(axis=0)).max(axis=0)

    return SeedStudyReport(
        seeds=seeds,
        runs=runs,
        final_mu=final_mu,
        final_vals=final_vals,
        mu_spread_final=spread_final,
        mu_range=hi - lo,
        step_spread_max=step_spread,
    )


@dataclass
class InitSweepEntry:
    epsilon: float
    seed: int
    final_mu: np.ndarray
    final_lam: np.ndarray
    final_val: float
    diverged: bool


@dataclass
class InitSweepReport:
    """Convergence endpoints across initialization scales.

    Endpoints are compared in weight space: a rejected term's exponent
    keeps drifting toward minus infinity while its weight is already
    pinned at zero, so weight vectors identify convergence points where
    raw exponent distances would not. Clustering is greedy: an endpoint
    joins the first cluster whose representative (its first member)
    lies within ``threshold`` in max-norm over the weights, otherwise
    it opens a new cluster.
    """

    entries: list[InitSweepEntry]
    clusters: list[list[int]]
    representatives: list[np.ndarray]
    threshold: float

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)


def run_init_sweep(config: ExperimentConfig, epsilons=None, seed=None) -> InitSweepReport:
    """One learned-mode run per initialization scale, endpoints clustered."""
    epsilons = tuple(epsilons if epsilons is not None else config.epsilon_sweep)
    if len(epsilons) < 2:
        raise ValueError("init sweep needs at least 2 epsilon values")
    seed = config.seeds[0] if seed is None else seed
    base = replace(config, mode="learned")

    entries = []
    for eps in epsilons:
        result = run_training(with_epsilon(base, eps), seed)
        final = result.final
        final_mu = final.mu if final is not None else result.initial_mu
        final_lam = final.lam if final is not None else softmax_weights(HPExponents(final_mu)).lam
        entries.append(
            InitSweepEntry(
                epsilon=float(eps),
                seed=seed,
                final_mu=final_mu,
                final_lam=final_lam,
                final_val=result.final_val,
                diverged=result.diverged,
            )
        )

    clusters: list[list[int]] = []
    reps: list[np.ndarray] = []
    for i, entry in enumerate(entries):
        for j, rep in enumerate(reps):
            if float(np.max(np.abs(entry.final_lam - rep))) <= config.cluster_threshold:
                clusters[j].append(i)
                break
        else:
            clusters.append([i])
            reps.append(entry.final_lam)
    return InitSweepReport(
        entries=entries, clusters=clusters, representatives=reps, threshold=config.cluster_threshold
    )


# ---------------------------------------------------------------------------
# trajectory export / import

def trajectory_columns(n_terms: int) -> list[str]:
    return (
        ["t"]
        + [f"mu_{i}" for i in range(n_terms)]
        + [f"lambda_{i}" for i in range(n_terms)]
        + [f"l_{i}" for i in range(n_terms)]
        + ["L_e", "L_r", "val_basic_loss"]
    )


def _record_row(rec: TrajectoryRecord) -> list:
    return (
        [rec.t]
        + [float(v) for v in rec.mu]
        + [float(v) for v in rec.lam]
        + [float(v) for v in rec.losses]
        + [float(rec.composite), float(rec.regularizer), float(rec.val_basic_loss)]
    )


def export_results(records, fmt: str, path, n_terms: int | None = None) -> Path:
    """Write trajectory records to CSV or JSON with the fixed schema.

    Column order: t, mu_0..mu_K, lambda_0..lambda_K, l_0..l_K, L_e, L_r,
    val_basic_loss. ``n_terms`` is only needed when ``records`` is empty
    (to size the header). Floats are written with round-trip precision.
    """
    records = list(records)
    if fmt not in ("csv", "json"):
        raise ValueError(f"format must be 'csv' or 'json', got {fmt!r}")
    if records:
        n_terms = records[0].n_terms
    elif n_terms is None:
        raise ValueError("n_terms is required to export an empty trajectory")
    columns = trajectory_columns(n_terms)
    path = Path(path)
    try:
        if fmt == "csv":
            with path.open("w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(columns)
                for rec in records:
                    row = _record_row(rec)
                    writer.writerow([str(row[0])] + [repr(v) for v in row[1:]])
        else:
            payload = [dict(zip(columns, _record_row(rec))) for rec in records]
            with path.open("w") as fh:
                json.dump(payload, fh, indent=2)
    except OSError as exc:
        raise OSError(f"cannot write {fmt} trajectory to {path}: {exc}") from exc
    return path


def _records_from_rows(columns, rows) -> list[TrajectoryRecord]:
    n_terms = sum(1 for c in columns if c.startswith("mu_"))
    expected = trajectory_columns(n_terms)
    if list(columns) != expected:
        raise ValueError(f"unexpected trajectory columns {list(columns)!r}")
    out = []
    for row in rows:
        vals = dict(zip(columns, row))
        out.append(
            TrajectoryRecord(
                t=int(vals["t"]),
                mu=np.array([float(vals[f"mu_{i}"]) for i in range(n_terms)]),
                lam=np.array([float(vals[f"lambda_{i}"]) for i in range(n_terms)]),
                losses=np.array([float(vals[f"l_{i}"]) for i in range(n_terms)]),
                composite=float(vals["L_e"]),
                regularizer=float(vals["L_r"]),
                val_basic_loss=float(vals["val_basic_loss"]),
            )
        )
    return out


def trajectory_arity(path) -> int:
    """Number of loss terms in a trajectory CSV, readable from its header alone."""
    path = Path(path)
    with path.open(newline="") as fh:
        columns = next(csv.reader(fh))
    n_terms = sum(1 for c in columns if c.startswith("mu_"))
    if list(columns) != trajectory_columns(n_terms):
        raise ValueError(f"unexpected trajectory columns in {path}")
    return n_terms


def import_results(path, fmt: str | None = None) -> list[TrajectoryRecord]:
    """Read a trajectory file written by :func:`export_results`."""
    path = Path(path)
    if fmt is None:
        fmt = "json" if path.suffix.lower() == ".json" else "csv"
    try:
        if fmt == "csv":
            with path.open(newline="") as fh:
                reader = csv.reader(fh)
                columns = next(reader)
                rows = list(reader)
            return _records_from_rows(columns, rows)
        payload = json.loads(path.read_text())
        if not payload:
            return []
        columns = list(payload[0].keys())
        rows = [[rec[c] for c in columns] for rec in payload]
        return _records_from_rows(columns, rows)
    except OSError as exc:
        raise OSError(f"cannot read trajectory from {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# plain-dict summaries (JSON-ready, used by the CLI)

def run_summary(result: RunResult) -> dict:
    final = result.final
    return {
        "seed": result.seed,
        "mode": result.mode,
        "fixed_weights": None if result.fixed_weights is None else [float(v) for v in result.fixed_weights],
        "initial_mu": [float(v) for v in result.initial_mu],
        "steps_recorded": len(result.trajectory),
        "final_step": final.t if final else None,
        "final_mu": [float(v) for v in final.mu] if final else None,
        "final_lambda": [float(v) for v in final.lam] if final else None,
        "final_val_basic_loss": final.val_basic_loss if final else None,
        "best_val_basic_loss": None if math.isinf(result.best_val) else result.best_val,
        "best_val_step": result.best_val_step,
        "diverged": result.diverged,
        "diverged_step": result.diverged_step,
        "wall_time_sec": result.wall_time,
    }


def grid_summary(result: GridSearchResult) -> dict:
    rows = []
    for p in result.points:
        rows.append(
            {
                "raw_point": [float(v) for v in p.raw_point],
                "log_ratio": p.log_ratio,
                "lambda": [float(v) for v in p.lam],
                "per_seed_val": {str(r.seed): (None if r.diverged else r.final_val) for r in p.runs},
                "mean_val": None if math.isinf(p.mean_val) else p.mean_val,
                "std_val": p.std_val,
                "diverged_seeds": [r.seed for r in p.runs if r.diverged],
            }
        )
    return {"seeds": list(result.seeds), "points": rows, "best_index": result.best_index}


def seed_study_summary(report: SeedStudyReport) -> dict:
    return {
        "seeds": list(report.seeds),
        "final_mu": [[float(v) for v in row] for row in report.final_mu],
        "final_vals": [float(v) for v in report.final_vals],
        "val_mean": report.val_mean,
        "val_std": report.val_std,
        "mu_spread_final": [float(v) for v in report.mu_spread_final],
        "mu_range": [float(v) for v in report.mu_range],
        "step_spread_max": [float(v) for v in report.step_spread_max],
    }


def init_sweep_summary(report: InitSweepReport) -> dict:
    return {
        "threshold": report.threshold,
        "n_clusters": report.n_clusters,
        "clusters": report.clusters,
        "representatives": [[float(v) for v in rep] for rep in report.representatives],
        "entries": [
            {
                "epsilon": e.epsilon,
                "seed": e.seed,
                "final_mu": [float(v) for v in e.final_mu],
                "final_lambda": [float(v) for v in e.final_lam],
                "final_val": None if math.isinf(e.final_val) else e.final_val,
                "diverged": e.diverged,
            }
            for e in report.entries
        ],
    }
