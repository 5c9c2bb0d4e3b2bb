"""Autoregressive rollouts and horizon losses.

The neural loss averages, over window starts ``m`` (stride 1), the mean over
``tau = 1..T`` of the forecast error ``||x(m+tau) - f^tau(x(m))||`` (or its
square).  Its gradient is taken by backpropagation through the rollout.  The
mechanistic loss restarts numerical integration of the ODE from observed
states every ``T`` samples (stride ``T``) and sums the errors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import dynamics
from .dynamics import SystemSpec, Trajectory
from .errors import DivergenceError, GradientSingularityError
from .net import MlpConfig, ParamVector, backward, forward, zeros_like
from .seeding import stream

NORM_MODES = ("euclidean", "squared")


@dataclass(frozen=True)
class HorizonLossConfig:
    T: int
    norm_mode: str = "squared"
    batch: Optional[tuple] = None

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be a positive integer")
        if self.norm_mode not in NORM_MODES:
            raise ValueError(f"norm_mode must be one of {NORM_MODES}")
        if self.batch is not None:
            object.__setattr__(self, "batch", tuple(int(i) for i in self.batch))


def window_starts(traj: Trajectory, T: int) -> np.ndarray:
    """All window starts ``m`` with ``m + T`` inside the trajectory."""
    if T >= traj.M:
        raise ValueError(f"horizon T={T} needs more than {traj.M} samples")
    return np.arange(traj.M - T)


def _starts(traj: Trajectory, lcfg: HorizonLossConfig) -> np.ndarray:
    all_starts = window_starts(traj, lcfg.T)
    if lcfg.batch is None:
        return all_starts
    idx = np.asarray(lcfg.batch, dtype=int)
    if idx.size == 0 or idx.min() < 0 or idx.max() >= all_starts.size:
        raise ValueError("batch holds window starts outside the trajectory")
    return idx


def _check_finite(Y, step):
    if not np.all(np.isfinite(Y)):
        raise DivergenceError(f"rollout produced non-finite values at step {step}", step=step)


def rollout(config: MlpConfig, params: ParamVector, x0, n: int) -> np.ndarray:
    """Rows ``f^1(x0) .. f^n(x0)``; ``x0`` may be a batch, giving ``(n, B, D)``."""
    if n < 1:
        raise ValueError("n must be positive")
    x = np.asarray(x0, dtype=float)
    if x.shape[-1] != config.input_dim:
        raise ValueError(f"x0 must have trailing length {config.input_dim}")
    out = np.empty((n,) + x.shape)
    for k in range(n):
        x = forward(config, params, x)[0]
        _check_finite(x, k + 1)
        out[k] = x
    return out


def _residual_terms(R: np.ndarray, norm_mode: str):
    if norm_mode == "squared":
        return np.einsum("bd,bd->b", R, R)
    return np.sqrt(np.einsum("bd,bd->b", R, R))


def horizon_loss(config: MlpConfig, params: ParamVector, traj: Trajectory, lcfg: HorizonLossConfig) -> float:
    """Mean over windows of the per-window mean forecast error up to ``T``."""
    starts = _starts(traj, lcfg)
    X = traj.states
    Y = X[starts]
    per_window = np.zeros(starts.size)
    for tau in range(1, lcfg.T + 1):
        Y = forward(config, params, Y)[0]
        _check_finite(Y, tau)
        per_window += _residual_terms(Y - X[starts + tau], lcfg.norm_mode)
    return float(np.sum(per_window) / (starts.size * lcfg.T))


def horizon_loss_grad(config: MlpConfig, params: ParamVector, traj: Trajectory, lcfg: HorizonLossConfig):
    """Loss and its exact parameter gradient by backpropagation through the rollout.

    Raises:
        GradientSingularityError: euclidean mode hit a zero residual, where
            the norm is not differentiable; use squared mode there.
    """
    starts = _starts(traj, lcfg)
    X = traj.states
    T = lcfg.T
    scale = 1.0 / (starts.size * T)
    Y = X[starts]
    caches, cotangents = [], []
    per_window = np.zeros(starts.size)
    for tau in range(1, T + 1):
        Y, cache = forward(config, params, Y)
        _check_finite(Y, tau)
        R = Y - X[starts + tau]
        caches.append(cache)
        if lcfg.norm_mode == "squared":
            per_window += np.einsum("bd,bd->b", R, R)
            cotangents.append(2.0 * scale * R)
        else:
            norms = np.sqrt(np.einsum("bd,bd->b", R, R))
            if np.any(norms <= 1e-12):
                raise GradientSingularityError(
                    f"zero residual at step {tau}: the euclidean loss is not differentiable there; "
                    "use norm_mode='squared'"
                )
            per_window += norms
            cotangents.append(scale * R / norms[:, None])
    grad = zeros_like(params)
    carry = np.zeros_like(Y)
    for tau in reversed(range(T)):
        carry, g = backward(config, params, caches[tau], cotangents[tau] + carry)
        grad.values += g.values
    return float(np.sum(per_window) * scale), grad


def horizon_loss_map(step: Callable[[np.ndarray], np.ndarray], traj: Trajectory, lcfg: HorizonLossConfig) -> float:
    """:func:`horizon_loss` for an arbitrary batched one-step map ``step``."""
    starts = _starts(traj, lcfg)
    X = traj.states
    Y = X[starts]
    per_window = np.zeros(starts.size)
    for tau in range(1, lcfg.T + 1):
        Y = np.asarray(step(Y), dtype=float)
        _check_finite(Y, tau)
        per_window += _residual_terms(Y - X[starts + tau], lcfg.norm_mode)
    return float(np.sum(per_window) / (starts.size * lcfg.T))


def mechanistic_loss(
    spec: SystemSpec,
    theta,
    traj: Trajectory,
    T: int,
    integrator: str = "rk4",
    norm_mode: str = "euclidean",
) -> float:
    """Piecewise (multiple-shooting) loss of an ODE model with parameters ``theta``.

    Segments start at observed ``x(mT)`` for every ``m`` with ``mT + T``
    inside the data; each is integrated ``T`` sampling steps and compared
    against the observations.  Errors are summed, not averaged.
    """
    if norm_mode not in NORM_MODES:
        raise ValueError(f"norm_mode must be one of {NORM_MODES}")
    if T < 1 or T >= traj.M:
        raise ValueError(f"T must be in [1, {traj.M - 1}]")
    model = spec.with_params(theta)
    X = traj.raw_states()
    seg_starts = np.arange(0, traj.M - T, T)
    if integrator == "rk4":
        try:
            path = dynamics.rk4_path(model, X[seg_starts], traj.dt, T)
        except DivergenceError:
            # locate the first diverging segment by integrating them one at a time
            for k, s in enumerate(seg_starts):
                try:
                    dynamics.rk4_path(model, X[s], traj.dt, T)
                except DivergenceError as exc:
                    raise DivergenceError(f"segment {k} diverged", step=k) from exc
            raise
        pred = np.swapaxes(path[1:], 0, 1)  # (segments, T, D)
    elif integrator == "dopri5":
        pred = np.empty((seg_starts.size, T, traj.dim))
        for k, s in enumerate(seg_starts):
            try:
                pred[k] = dynamics.integrate(model, X[s], traj.dt, T, method="dopri5").states[1:]
            except DivergenceError as exc:
                raise DivergenceError(f"segment {k} diverged", step=k) from exc
    else:
        raise ValueError(f"unknown integrator {integrator!r}")
    idx = seg_starts[:, None] + np.arange(1, T + 1)[None, :]
    R = (pred - X[idx]).reshape(-1, traj.dim)
    return float(np.sum(_residual_terms(R, norm_mode)))


def loss_upper_bound(traj: Trajectory, epsilon: float) -> float:
    """Largest squared distance between two trajectory states, plus ``2*epsilon``."""
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    X = traj.states
    best = 0.0
    chunk = max(1, 2_000_000 // max(1, X.shape[0]))
    sq = np.einsum("md,md->m", X, X)
    for lo in range(0, X.shape[0], chunk):
        block = X[lo : lo + chunk]
        d2 = sq[lo : lo + chunk, None] + sq[None, :] - 2.0 * block @ X.T
        best = max(best, float(d2.max()))
    return max(best, 0.0) + 2.0 * epsilon


def mlp_step(config: MlpConfig, params: ParamVector) -> Callable[[np.ndarray], np.ndarray]:
    """Batched one-step map of an MLP."""
    return lambda Y: forward(config, params, Y)[0]


def long_horizon_error(
    config: Optional[MlpConfig],
    params: Optional[ParamVector],
    spec: SystemSpec,
    n_starts: int,
    T_long: int,
    *,
    dt: Optional[float] = None,
    seed: int = 0,
    n_attractor: int = 4000,
    normalization: Optional[tuple] = None,
    step_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> tuple:
    """Mean squared ``T_long``-step forecast error against ``2 * trace(cov)``.

    Starts are drawn from a long attractor trajectory of ``spec``.  Errors
    and the covariance are measured in the model's coordinates: if
    ``normalization = (mean, std)`` is given, states are z-scored with it
    before being fed to the model.  ``step_fn`` replaces the MLP with any
    batched one-step map (e.g. the exact flow).

    Choose ``T_long * dt`` well beyond ``1 / lambda_max`` to probe the
    random-forecast regime.
    """
    if n_starts < 1 or T_long < 1:
        raise ValueError("n_starts and T_long must be positive")
    dt = spec.default_dt if dt is None else dt
    step = step_fn if step_fn is not None else mlp_step(config, params)
    attractor = dynamics.simulate(spec, n_attractor, seed=seed, dt=dt, method="rk4").states
    rng = stream(seed, "starts")
    X0 = attractor[rng.choice(attractor.shape[0], size=n_starts, replace=n_starts > attractor.shape[0])]
    truth = dynamics.rk4_path(spec, X0, dt, T_long)[-1]
    if normalization is not None:
        mean, std = (np.asarray(a, dtype=float) for a in normalization)
        to_model = lambda Z: (Z - mean) / std  # noqa: E731
    else:
        to_model = lambda Z: Z  # noqa: E731
    Y = to_model(X0)
    for k in range(T_long):
        Y = np.asarray(step(Y), dtype=float)
        _check_finite(Y, k + 1)
    err = Y - to_model(truth)
    mse = float(np.mean(np.einsum("bd,bd->b", err, err)))
    cov = np.cov(to_model(attractor), rowvar=False)
    return mse, 2.0 * float(np.trace(np.atleast_2d(cov)))


def evaluate_horizons(
    config: MlpConfig, params: ParamVector, traj: Trajectory, horizons: Sequence[int]
) -> dict:
    """Mean squared final-step error ``||x(m+T_l) - f^{T_l}(x(m))||^2`` per horizon."""
    horizons = [int(h) for h in horizons]
    if not horizons or min(horizons) < 1:
        raise ValueError("horizons must be positive integers")
    H = max(horizons)
    if H >= traj.M:
        raise ValueError(f"horizon {H} needs more than {traj.M} samples")
    starts = np.arange(traj.M - H)
    X = traj.states
    Y = X[starts]
    wanted = set(horizons)
    out = {}
    for tau in range(1, H + 1):
        Y = forward(config, params, Y)[0]
        _check_finite(Y, tau)
        if tau in wanted:
            R = Y - X[starts + tau]
            out[tau] = float(np.mean(np.einsum("bd,bd->b", R, R)))
    return {h: out[h] for h in horizons}
