"""Iterative joint scheduling of the training horizon T and learning rate eta.

The loop alternates *look* phases (a fixed number of epochs from the last
committed parameters) and *commit* phases (train until the gradient norm
drops below ``gamma`` or the wall budget runs out):

* a phase whose validation loss improves is accepted and committed;
* otherwise eta is shrunk by undoing the fitted growth of the gradient norm
  over the phase (at least by ``min_shrink``) and the parameters are
  restored;
* a gradient-norm early stop increments T and re-enters a look phase.
"""

from __future__ import annotations

import io
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .dynamics import Trajectory
from .net import MlpConfig, ParamVector, init
from .optimize import Budget, TrainConfig, split_trajectory, train, validation_loss
from .storage import atomic_write_text, fmt

TRACE_COLUMNS = ("wall_time", "T", "eta", "phase", "val_loss", "grad_norm", "action")


@dataclass(frozen=True)
class SchedulerConfig:
    eta0: float = 1e-3
    gamma: float = 1.5e-4
    lookahead_epochs: int = 20
    wall_limit: float = 60.0
    trend_fit: str = "exponential"
    improve_delta: float = 1e-3
    eta_min: float = 1e-8
    min_shrink: float = 2.0
    T_cap: int = 32
    val_horizon: int = 1

    def __post_init__(self):
        if not (self.eta0 > 0 and self.gamma > 0 and self.wall_limit > 0 and self.eta_min > 0):
            raise ValueError("eta0, gamma, wall_limit and eta_min must be positive")
        if self.lookahead_epochs < 1:
            raise ValueError("lookahead_epochs must be >= 1")
        if self.trend_fit not in ("exponential", "linear"):
            raise ValueError("trend_fit must be 'exponential' or 'linear'")
        if not self.min_shrink > 1:
            raise ValueError("min_shrink must exceed 1")


@dataclass(frozen=True)
class ScheduleEvent:
    wall_time: float
    T: int
    eta: float
    phase: str  # init | look | commit
    val_loss: float
    grad_norm: float
    action: str  # init | accept | reject_eta_adjust | horizon_increment | horizon_cap
    start_values: Optional[np.ndarray] = field(default=None, compare=False, repr=False)


@dataclass
class ScheduleTrace:
    events: list = field(default_factory=list)

    def column(self, name: str) -> list:
        return [getattr(e, name) for e in self.events]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write(",".join(TRACE_COLUMNS) + "\n")
        for e in self.events:
            buf.write(
                ",".join(
                    [fmt(e.wall_time), str(e.T), fmt(e.eta), e.phase, fmt(e.val_loss), fmt(e.grad_norm), e.action]
                )
                + "\n"
            )
        text = buf.getvalue()
        if path is not None:
            atomic_write_text(path, text)
        return text


def fit_growth(grad_norms, mode: str) -> float:
    """Factor by which the gradient norm grew across the window, per the fitted trend.

    Exponential: fit ``log g = log c + b k``, factor ``exp(b W)``.
    Linear: fit ``g = c + b k``, factor ``1 + b W / c``.  ``W`` is the
    window length in steps.
    """
    g = np.asarray(grad_norms, dtype=float)
    g = g[np.isfinite(g) & (g > 0)]
    if g.size < 2:
        return 1.0
    k = np.arange(g.size, dtype=float)
    W = float(g.size)
    if mode == "exponential":
        b, _ = np.polyfit(k, np.log(g), 1)
        return float(math.exp(min(b * W, 700.0)))
    b, c = np.polyfit(k, g, 1)
    if c <= 0:
        return math.inf if b > 0 else 1.0
    return float(1.0 + b * W / c)


def run_scheduler(
    config: MlpConfig,
    traj: Trajectory,
    scfg: SchedulerConfig,
    tcfg: TrainConfig,
    init_params: Optional[ParamVector] = None,
    clock: Callable[[], float] = time.perf_counter,
) -> tuple:
    """Run the T/eta scheduler until the wall limit; returns ``(best_params, trace)``.

    ``tcfg`` supplies optimizer, batch and split settings; its budget,
    learning rate, ``gamma`` and ``val_horizon`` are overridden.  The
    returned parameters have the lowest validation loss at
    ``scfg.val_horizon`` among all committed states (``theta0`` when
    nothing was committed).  A look phase cut short by the wall limit is
    discarded.
    """
    t_start = clock()
    deadline = t_start + scfg.wall_limit
    val = split_trajectory(traj, tcfg.val_fraction)[1]
    base = replace(tcfg, gamma=scfg.gamma, val_horizon=scfg.val_horizon)

    T, eta = 1, scfg.eta0
    theta_prev = init(config) if init_params is None else init_params.copy()
    look = True
    v_prev = validation_loss(config, theta_prev, val, scfg.val_horizon)
    best, best_val = theta_prev.copy(), v_prev
    trace = ScheduleTrace()
    trace.events.append(ScheduleEvent(0.0, T, eta, "init", v_prev, math.nan, "init", theta_prev.values.copy()))
    max_T = len(split_trajectory(traj, tcfg.val_fraction)[0].states) - 1
    T_cap = min(scfg.T_cap, max_T)

    while clock() < deadline:
        start_values = theta_prev.values.copy()
        if look:
            budget = Budget.epochs(scfg.lookahead_epochs)
        else:
            budget = Budget.wall(max(deadline - clock(), 1e-9))
        report = train(
            config, traj, T, replace(base, eta=eta, budget=budget), init_params=theta_prev, deadline=deadline, clock=clock
        )
        if look and report.epochs < scfg.lookahead_epochs and report.stop_reason == "budget":
            break  # look phase interrupted by the wall limit
        phase = "look" if look else "commit"
        v_new = validation_loss(config, report.final_params, val, scfg.val_horizon)
        g_last = float(report.grad_norm_curve[-1]) if report.grad_norm_curve.size else math.nan
        improved = (
            report.stop_reason != "divergence"
            and math.isfinite(v_new)
            and (v_prev - v_new) > scfg.improve_delta * abs(v_prev)
        )
        if report.stop_reason == "grad_stop":
            if improved:
                theta_prev, v_prev = report.final_params, v_new
            if T + 1 > T_cap:
                trace.events.append(
                    ScheduleEvent(clock() - t_start, T, eta, phase, v_new, g_last, "horizon_cap", start_values)
                )
                break
            T += 1
            look = True
            action = "horizon_increment"
        elif improved:
            theta_prev, v_prev = report.final_params, v_new
            look = False
            action = "accept"
        else:
            growth = fit_growth(report.grad_norm_curve, scfg.trend_fit)
            shrink = max(scfg.min_shrink, growth if math.isfinite(growth) else scfg.min_shrink)
            eta = min(scfg.eta0, max(scfg.eta_min, eta / shrink))
            look = True  # a failed commit is retried as a look phase
            action = "reject_eta_adjust"
        if action != "reject_eta_adjust" and v_prev < best_val:
            best, best_val = theta_prev.copy(), v_prev
        trace.events.append(
            ScheduleEvent(clock() - t_start, T, eta, phase, v_new, g_last, action, start_values)
        )
    return best, trace
