"""Training loops, the horizon curriculum, multi-horizon evaluation and sweeps."""

from __future__ import annotations

import itertools
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from . import dynamics
from .arloss import HorizonLossConfig, evaluate_horizons, horizon_loss, horizon_loss_grad, window_starts
from .dynamics import SystemSpec, Trajectory
from .errors import DivergenceError, NumericError
from .net import MlpConfig, ParamVector, init
from .seeding import stream
from .storage import write_table

DEFAULT_GAMMA = 1.5e-4
STOP_REASONS = ("budget", "grad_stop", "divergence")


@dataclass(frozen=True)
class Budget:
    kind: str
    amount: float

    def __post_init__(self):
        if self.kind not in ("epochs", "wall_seconds"):
            raise ValueError("budget kind must be 'epochs' or 'wall_seconds'")
        if not self.amount > 0:
            raise ValueError("budget amount must be positive")
        if self.kind == "epochs" and int(self.amount) != self.amount:
            raise ValueError("epoch budgets must be whole numbers")

    @classmethod
    def epochs(cls, n: int) -> "Budget":
        return cls("epochs", int(n))

    @classmethod
    def wall(cls, seconds: float) -> "Budget":
        return cls("wall_seconds", float(seconds))

    @classmethod
    def parse(cls, text: str) -> "Budget":
        """Parse ``epochs:100`` or ``wall_seconds:30`` (``wall:30`` also accepted)."""
        kind, _, amount = text.partition(":")
        kind = {"wall": "wall_seconds", "seconds": "wall_seconds"}.get(kind, kind)
        if kind == "epochs":
            return cls.epochs(int(amount))
        return cls(kind, float(amount))

    def split(self, n: int) -> list:
        """Divide into ``n`` equal phases (epoch remainders go to the earliest phases)."""
        if self.kind == "wall_seconds":
            return [Budget.wall(self.amount / n)] * n
        total = int(self.amount)
        if total < n:
            raise ValueError(f"cannot split {total} epochs into {n} phases")
        base, extra = divmod(total, n)
        return [Budget.epochs(base + (1 if k < extra else 0)) for k in range(n)]

    def __str__(self) -> str:
        return f"{self.kind}:{self.amount:g}"


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer, budget and stopping settings.

    ``val_horizon`` fixes the horizon of the validation loss; ``None`` uses
    the training horizon.  ``clip_norm`` enables global-norm gradient
    clipping (off by default).
    """

    optimizer: str = "adam"
    eta: float = 1e-3
    batch_size: int = 512
    budget: Budget = field(default_factory=lambda: Budget.epochs(100))
    gamma: float = DEFAULT_GAMMA
    seed: int = 0
    val_fraction: float = 0.2
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    norm_mode: str = "squared"
    val_horizon: Optional[int] = None
    clip_norm: Optional[float] = None
    divergence_factor: float = 1e6

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError("optimizer must be 'sgd' or 'adam'")
        if self.eta < 0:
            raise ValueError("eta must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in (0, 1)")
        if isinstance(self.budget, str):
            object.__setattr__(self, "budget", Budget.parse(self.budget))


@dataclass
class TrainReport:
    T: int
    loss_curve: np.ndarray
    grad_norm_curve: np.ndarray
    val_curve: np.ndarray
    wall_seconds: float
    initial_params: ParamVector
    final_params: ParamVector
    best_params: ParamVector
    stop_reason: str
    steps: int
    epochs: int

    @property
    def best_val_loss(self) -> float:
        finite = self.val_curve[np.isfinite(self.val_curve)]
        return float(finite.min()) if finite.size else math.nan


class SGD:
    def __init__(self, eta: float):
        self.eta = eta

    def step(self, values: np.ndarray, grad: np.ndarray) -> None:
        values -= self.eta * grad


class Adam:
    def __init__(self, eta: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.eta, self.beta1, self.beta2, self.eps = eta, beta1, beta2, eps
        self.m = None
        self.v = None
        self.t = 0

    def step(self, values: np.ndarray, grad: np.ndarray) -> None:
        if self.m is None:
            self.m = np.zeros_like(values)
            self.v = np.zeros_like(values)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        values -= self.eta * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(tcfg: TrainConfig):
    if tcfg.optimizer == "sgd":
        return SGD(tcfg.eta)
    return Adam(tcfg.eta, tcfg.beta1, tcfg.beta2, tcfg.adam_eps)


def split_trajectory(traj: Trajectory, val_fraction: float) -> tuple:
    """Chronological split: the last ``val_fraction`` of samples validate.

    Training windows only touch samples before the split point and
    validation windows only samples after it, so no state is shared.
    """
    cut = int(round(traj.M * (1.0 - val_fraction)))
    cut = min(max(cut, 2), traj.M - 2)
    train = replace(traj, states=traj.states[:cut])
    val = replace(traj, states=traj.states[cut:], t0=traj.t0 + cut * traj.dt)
    return train, val


def total_variance(traj: Trajectory) -> float:
    return float(np.sum(np.var(traj.states, axis=0)))


def validation_loss(config: MlpConfig, params: ParamVector, val: Trajectory, horizon: int) -> float:
    try:
        return horizon_loss(config, params, val, HorizonLossConfig(horizon, "squared"))
    except (DivergenceError, NumericError, FloatingPointError):
        return math.inf


def train(
    config: MlpConfig,
    traj: Trajectory,
    T: int,
    tcfg: TrainConfig,
    init_params: Optional[ParamVector] = None,
    deadline: Optional[float] = None,
    clock: Callable[[], float] = time.perf_counter,
) -> TrainReport:
    """Minimize the horizon-``T`` loss on the training split.

    Mini-batches are window starts sampled without replacement each epoch.
    Stops when the budget is exhausted, when a mini-batch gradient norm
    drops below ``gamma``, or on divergence (non-finite loss, or loss above
    ``divergence_factor`` times the trajectory's total variance).
    ``deadline`` is an extra absolute ``clock()`` cutoff used by schedulers.
    """
    train_traj, val_traj = split_trajectory(traj, tcfg.val_fraction)
    if T >= train_traj.M:
        raise ValueError(f"T={T} needs more than {train_traj.M} training samples")
    val_h = tcfg.val_horizon or T
    if val_h >= val_traj.M:
        raise ValueError(f"validation horizon {val_h} needs more than {val_traj.M} validation samples")
    params = init(config) if init_params is None else init_params.copy()
    initial = params.copy()
    starts = window_starts(train_traj, T)
    batch = min(tcfg.batch_size, starts.size)
    threshold = tcfg.divergence_factor * max(total_variance(train_traj), 1e-300)
    opt = make_optimizer(tcfg)
    rng = stream(tcfg.seed, "batches")

    losses, gnorms = [], []
    val0 = validation_loss(config, params, val_traj, val_h)
    vals = [val0]
    best, best_val = params.copy(), val0
    stop = "budget"
    steps = epochs = 0
    t_start = clock()
    wall_limit = tcfg.budget.amount if tcfg.budget.kind == "wall_seconds" else math.inf
    max_epochs = int(tcfg.budget.amount) if tcfg.budget.kind == "epochs" else None

    def out_of_time():
        now = clock()
        return now - t_start >= wall_limit or (deadline is not None and now >= deadline)

    done = out_of_time()
    while not done and (max_epochs is None or epochs < max_epochs):
        order = rng.permutation(starts.size)
        for lo in range(0, order.size, batch):
            idx = np.sort(order[lo : lo + batch])
            try:
                loss, grad = horizon_loss_grad(
                    config, params, train_traj, HorizonLossConfig(T, tcfg.norm_mode, batch=idx)
                )
                g = grad.values
                gnorm = float(np.sqrt(g @ g))
            except (DivergenceError, NumericError, FloatingPointError):
                loss, gnorm, g = math.nan, math.nan, None
            losses.append(loss)
            gnorms.append(gnorm)
            steps += 1
            if not (math.isfinite(loss) and math.isfinite(gnorm)):
                stop, done = "divergence", True
                break
            if gnorm < tcfg.gamma:
                stop, done = "grad_stop", True
                break
            if loss > threshold:
                stop, done = "divergence", True
                break
            if tcfg.clip_norm is not None and gnorm > tcfg.clip_norm:
                g = g * (tcfg.clip_norm / gnorm)
            opt.step(params.values, g)
            if out_of_time():
                done = True
                break
        else:
            epochs += 1
        if stop == "divergence":
            break
        v = validation_loss(config, params, val_traj, val_h)
        vals.append(v)
        if not math.isfinite(v):
            stop = "divergence"
            break
        if v < best_val:
            best, best_val = params.copy(), v
        if out_of_time():
            done = True
    return TrainReport(
        T=T,
        loss_curve=np.array(losses),
        grad_norm_curve=np.array(gnorms),
        val_curve=np.array(vals),
        wall_seconds=clock() - t_start,
        initial_params=initial,
        final_params=params,
        best_params=best,
        stop_reason=stop,
        steps=steps,
        epochs=epochs,
    )


def refine_minimum(
    config: MlpConfig,
    traj: Trajectory,
    T: int,
    params: ParamVector,
    gtol: float = 1e-6,
    max_iter: int = 2000,
    norm_mode: str = "squared",
) -> ParamVector:
    """Polish ``params`` towards a stationary point of the full-data loss with L-BFGS."""
    lcfg = HorizonLossConfig(T, norm_mode)

    def fun(v):
        try:
            loss, grad = horizon_loss_grad(config, params.with_values(v), traj, lcfg)
        except (DivergenceError, NumericError):
            return math.inf, np.zeros_like(v)
        return loss, grad.values

    res = minimize(
        fun,
        params.values.copy(),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": max_iter, "gtol": gtol, "ftol": 1e-15, "maxcor": 30},
    )
    return params.with_values(res.x)


def curriculum_train(
    config: MlpConfig,
    traj: Trajectory,
    T_max: int,
    total_budget: Budget,
    tcfg: TrainConfig,
    init_params: Optional[ParamVector] = None,
) -> list:
    """Train at ``T = 1, 2, ..., T_max`` in sequence, splitting the budget equally.

    Parameters carry over between phases: phase ``k`` starts from phase
    ``k-1``'s final parameters.
    """
    if T_max < 1:
        raise ValueError("T_max must be >= 1")
    reports = []
    params = init_params
    for T, phase_budget in zip(range(1, T_max + 1), total_budget.split(T_max)):
        report = train(config, traj, T, replace(tcfg, budget=phase_budget), init_params=params)
        reports.append(report)
        if report.stop_reason == "divergence":
            break
        params = report.final_params
    return reports


def evaluate(config: MlpConfig, params: ParamVector, traj: Trajectory, eval_horizons: Sequence[int]) -> dict:
    """Mean squared final-step error at each requested horizon, over all windows of ``traj``."""
    return evaluate_horizons(config, params, traj, eval_horizons)


# ---------------------------------------------------------------------------
# sweeps

SWEEP_COLUMNS = (
    "system",
    "T",
    "eta",
    "sigma",
    "width_factor",
    "n_blocks",
    "seed",
    "best_val_loss",
    "stop_reason",
    "steps",
    "wall_seconds",
)


@dataclass(frozen=True)
class SweepGrid:
    T: tuple
    eta: tuple
    sigma: tuple = (0.0,)
    size: tuple = ((4, 2),)  # (width_factor, n_blocks)

    def __post_init__(self):
        for name in ("T", "eta", "sigma", "size"):
            value = tuple(tuple(v) if name == "size" else v for v in getattr(self, name))
            if not value:
                raise ValueError(f"sweep axis {name!r} is empty")
            object.__setattr__(self, name, value)

    def cells(self):
        return list(itertools.product(self.sigma, self.size, self.T, self.eta))


@dataclass(frozen=True)
class SweepBase:
    spec: SystemSpec
    model: MlpConfig
    train: TrainConfig
    n_samples: int = 1000
    dt: Optional[float] = None
    seed: int = 0
    data_method: str = "dopri5"


def sweep_trajectory(base: SweepBase, sigma: float) -> Trajectory:
    clean = dynamics.simulate(base.spec, base.n_samples, seed=base.seed, dt=base.dt, method=base.data_method)
    return dynamics.normalize(dynamics.add_observation_noise(clean, sigma, base.seed))


def _run_cell(args):
    base, traj, sigma, size, T, eta = args
    width, n_blocks = size
    row = {
        "system": base.spec.kind,
        "T": T,
        "eta": eta,
        "sigma": sigma,
        "width_factor": width,
        "n_blocks": n_blocks,
        "seed": base.train.seed,
    }
    t0 = time.perf_counter()
    try:
        model = replace(base.model, input_dim=traj.dim, width_factor=width, n_blocks=n_blocks)
        report = train(model, traj, T, replace(base.train, eta=eta))
        row.update(best_val_loss=report.best_val_loss, stop_reason=report.stop_reason, steps=report.steps)
    except Exception as exc:  # a failed cell is recorded, never fatal
        row.update(best_val_loss=math.nan, stop_reason=f"error:{type(exc).__name__}", steps=0)
    row["wall_seconds"] = time.perf_counter() - t0
    return row


def worker_count(requested: Optional[int] = None) -> int:
    """Workers for parallel sweeps; ``HORIZONLAB_THREADS`` caps it (0 = auto)."""
    if requested is None:
        requested = int(os.environ.get("HORIZONLAB_THREADS", "1") or 1)
    if requested <= 0:
        requested = os.cpu_count() or 1
    return requested


def sweep(grid: SweepGrid, base: SweepBase, workers: Optional[int] = None, out_csv=None) -> list:
    """Train one model per grid cell and return one row dict per cell.

    Rows are ordered by grid coordinate (sigma, size, T, eta) regardless of
    worker count.  Failures are recorded in ``stop_reason``.
    """
    trajs = {}
    for sigma in grid.sigma:
        trajs[sigma] = sweep_trajectory(base, sigma)
    jobs = [(base, trajs[s], s, size, T, eta) for s, size, T, eta in grid.cells()]
    n = worker_count(workers)
    if n > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(n, len(jobs))) as pool:
            rows = list(pool.map(_run_cell, jobs))
    else:
        rows = [_run_cell(job) for job in jobs]
    if out_csv is not None:
        write_sweep_csv(rows, out_csv)
    return rows


def write_sweep_csv(rows, path) -> None:
    write_table(path, SWEEP_COLUMNS, [[row[c] for c in SWEEP_COLUMNS] for row in rows])
