"""Loss-landscape probes.

Gradient growth with horizon, roughness along parameter-space segments,
Hutchinson Hessian traces, cross-horizon generalization ratios between
paired minima, epsilon-region checks, parameter scans and the noise-limited
horizon bound.  Every table-valued probe returns a :class:`LandscapeProbe`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from . import dynamics
from .arloss import HorizonLossConfig, horizon_loss, horizon_loss_grad
from .dynamics import SystemSpec, Trajectory
from .errors import (
    BasinMismatchError,
    DegenerateMinimumError,
    DivergenceError,
    IndeterminateRatioError,
    NumericError,
    StationarityError,
)
from .net import MlpConfig, ParamVector, forward
from .optimize import DEFAULT_GAMMA, TrainConfig, refine_minimum, split_trajectory, train
from .seeding import stream
from .storage import write_table

PROBE_COLUMNS = {
    "grad_ratio": ("T", "g"),
    "roughness": ("T", "z", "n_points"),
    "hessian_ratio": ("T", "trace", "stderr", "ratio", "flag"),
    "gen_ratio": ("T_l", "T_h", "r", "seed"),
    "scan1d": ("c0", "loss", "flag"),
    "scan2d": ("c0", "c1", "loss", "flag"),
    "eps_check": ("epsilon", "max_deviation", "pass"),
}

DEFAULT_FLAT_TOL = 1e-9
DEFAULT_POINTS_PER_UNIT = 512
DEFAULT_DELTA_PAIR = 0.05


@dataclass
class LandscapeProbe:
    kind: str
    inputs: dict
    values: np.ndarray
    seed: int = 0
    columns: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in PROBE_COLUMNS:
            raise ValueError(f"unknown probe kind {self.kind!r}")
        if not self.columns:
            self.columns = PROBE_COLUMNS[self.kind]
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.shape[1] != len(self.columns):
            raise ValueError(f"{self.kind} rows need {len(self.columns)} columns")

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def to_csv(self, path) -> None:
        write_table(path, self.columns, self.values.tolist())


# ---------------------------------------------------------------------------
# gradient growth


def gradient_ratio(
    config: MlpConfig,
    params: ParamVector,
    traj: Trajectory,
    T_list: Sequence[int],
    norm_mode: str = "squared",
) -> LandscapeProbe:
    """``g(T) = ||grad L(theta, T)|| / ||grad L(theta, 1)||`` on the full trajectory."""

    def gnorm(T):
        g = horizon_loss_grad(config, params, traj, HorizonLossConfig(T, norm_mode))[1].values
        return float(np.sqrt(g @ g))

    base = gnorm(1)
    if not base > 1e-12:
        raise DegenerateMinimumError("gradient at T=1 vanishes; g(T) is undefined at a minimum")
    rows = [(T, 1.0 if T == 1 else gnorm(T) / base) for T in T_list]
    return LandscapeProbe("grad_ratio", {"T_list": list(T_list), "norm_mode": norm_mode}, rows)


# ---------------------------------------------------------------------------
# roughness


def count_extrema(values, flat_tol: float = DEFAULT_FLAT_TOL) -> int:
    """Interior local minima plus maxima of a sampled curve.

    Consecutive differences smaller than ``flat_tol * (max - min)`` count as
    flat and are skipped; every remaining sign change is one extremum.
    """
    y = np.asarray(values, dtype=float)
    span = float(np.max(y) - np.min(y)) if y.size else 0.0
    if y.size < 3 or span == 0.0:
        return 0
    d = np.diff(y)
    s = np.sign(d)
    s[np.abs(d) <= flat_tol * span] = 0
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


def segment_points(theta1, theta2, n_points: int) -> np.ndarray:
    t1 = np.asarray(theta1, dtype=float)
    t2 = np.asarray(theta2, dtype=float)
    return t1[None, :] + np.linspace(0.0, 1.0, n_points)[:, None] * (t2 - t1)[None, :]


def segment_losses(loss_fn: Callable[[np.ndarray], float], theta1, theta2, n_points: int) -> np.ndarray:
    return np.array([loss_fn(p) for p in segment_points(theta1, theta2, n_points)])


def segment_roughness(
    loss_fn: Callable[[np.ndarray], float],
    theta1,
    theta2,
    n_points: Optional[int] = None,
    flat_tol: float = DEFAULT_FLAT_TOL,
) -> int:
    """Number of local extrema of the loss along the segment ``theta1 -> theta2``.

    ``n_points`` defaults to 512 per unit of parameter distance (at least 3).
    Compare counts only at equal resolution.
    """
    t1 = np.asarray(theta1, dtype=float)
    t2 = np.asarray(theta2, dtype=float)
    if np.array_equal(t1, t2):
        raise ValueError("theta1 and theta2 must differ")
    if n_points is None:
        n_points = max(3, int(math.ceil(DEFAULT_POINTS_PER_UNIT * np.linalg.norm(t2 - t1))))
    if n_points < 3:
        raise ValueError("n_points must be >= 3")
    return count_extrema(segment_losses(loss_fn, t1, t2, n_points), flat_tol)


# ---------------------------------------------------------------------------
# Hessian trace


class TraceEstimate(NamedTuple):
    trace: float
    stderr: float
    samples: np.ndarray


def hessian_trace(
    loss_grad_fn: Callable[[np.ndarray], np.ndarray],
    params,
    n_probes: int = 100,
    fd_step: float = 1e-4,
    seed: int = 0,
) -> TraceEstimate:
    """Hutchinson estimate of the Hessian trace with Rademacher probes.

    ``loss_grad_fn(theta)`` returns the gradient.  Each Hessian-vector
    product is a central difference of the gradient with step
    ``fd_step * (1 + ||theta||) / ||v||`` along ``v``.
    """
    if n_probes < 1:
        raise ValueError("n_probes must be >= 1")
    if not fd_step > 0:
        raise ValueError("fd_step must be positive")
    theta = np.asarray(params.values if isinstance(params, ParamVector) else params, dtype=float)
    rng = stream(seed, "probes")
    n = theta.size
    h = fd_step * (1.0 + np.linalg.norm(theta)) / math.sqrt(n)
    samples = np.empty(n_probes)
    for k in range(n_probes):
        v = rng.choice((-1.0, 1.0), size=n)
        gp = np.asarray(loss_grad_fn(theta + h * v), dtype=float)
        gm = np.asarray(loss_grad_fn(theta - h * v), dtype=float)
        samples[k] = v @ (gp - gm) / (2.0 * h)
    stderr = float(samples.std(ddof=1) / math.sqrt(n_probes)) if n_probes > 1 else math.nan
    return TraceEstimate(float(samples.mean()), stderr, samples)


def mlp_grad_fn(config: MlpConfig, params: ParamVector, traj: Trajectory, T: int, norm_mode: str = "squared"):
    lcfg = HorizonLossConfig(T, norm_mode)
    return lambda v: horizon_loss_grad(config, params.with_values(v), traj, lcfg)[1].values


def mlp_loss_fn(config: MlpConfig, params: ParamVector, traj: Trajectory, T: int, norm_mode: str = "squared"):
    lcfg = HorizonLossConfig(T, norm_mode)
    return lambda v: horizon_loss(config, params.with_values(v), traj, lcfg)


def hessian_ratio(
    config: MlpConfig,
    traj: Trajectory,
    minima: dict,
    T_list: Sequence[int],
    gamma: float = DEFAULT_GAMMA,
    n_probes: int = 100,
    fd_step: float = 1e-4,
    seed: int = 0,
    stationarity_tol: Optional[float] = None,
) -> LandscapeProbe:
    """Hessian trace at each horizon's own minimum relative to the T=1 minimum.

    Each minimum must satisfy ``||grad L(theta, T)|| < stationarity_tol``
    (default ``10 * gamma``).  Rows whose trace is not positive (saddles)
    get ``flag = 1`` and ``ratio = nan``.
    """
    if 1 not in minima:
        raise ValueError("minima must include T=1")
    tol = 10.0 * gamma if stationarity_tol is None else stationarity_tol
    needed = sorted(set(T_list) | {1})
    traces = {}
    for T in needed:
        if T not in minima:
            raise ValueError(f"no minimum supplied for T={T}")
        theta = minima[T]
        g = horizon_loss_grad(config, theta, traj, HorizonLossConfig(T))[1].values
        gn = float(np.sqrt(g @ g))
        if gn >= tol:
            raise StationarityError(f"minimum for T={T} is not stationary: |grad| = {gn:.3g} >= {tol:.3g}", T=T)
        traces[T] = hessian_trace(mlp_grad_fn(config, theta, traj, T), theta, n_probes, fd_step, seed)
    base = traces[1].trace
    rows = []
    for T in T_list:
        est = traces[T]
        saddle = not (est.trace > 0 and base > 0)
        ratio = math.nan if saddle else est.trace / base
        rows.append((T, est.trace, est.stderr, ratio, 1.0 if saddle else 0.0))
    inputs = {"T_list": list(T_list), "n_probes": n_probes, "fd_step": fd_step, "stationarity_tol": tol}
    return LandscapeProbe("hessian_ratio", inputs, rows, seed=seed)


# ---------------------------------------------------------------------------
# paired minima and the generalization ratio


def train_minimum(
    config: MlpConfig, traj: Trajectory, T: int, tcfg: TrainConfig, start: Optional[ParamVector] = None, refine: bool = True
) -> ParamVector:
    """Best-validation parameters of a training run at ``T``, optionally polished by L-BFGS."""
    theta = train(config, traj, T, tcfg, init_params=start).best_params
    if refine:
        theta = refine_minimum(config, split_trajectory(traj, tcfg.val_fraction)[0], T, theta)
    return theta


def paired_minima(
    config: MlpConfig,
    traj: Trajectory,
    T_l: int,
    T_h: int,
    tcfg: TrainConfig,
    delta_pair: float = DEFAULT_DELTA_PAIR,
    refine: bool = True,
    init_params: Optional[ParamVector] = None,
) -> tuple:
    """Find minima at ``T_l`` and ``T_h`` lying in each other's basin.

    Trains at ``T_l`` from scratch, then at ``T_h`` from that minimum, then
    back at ``T_l`` from the ``T_h`` minimum; the pair is accepted when the
    return lands within ``delta_pair * ||theta_l||`` of ``theta_l``.  With
    ``refine`` each stage is polished by L-BFGS on the training split.

    Raises:
        BasinMismatchError: the return trip ended elsewhere.
    """
    if T_l > T_h:
        raise ValueError("need T_l <= T_h")
    theta_l = train_minimum(config, traj, T_l, tcfg, init_params, refine)
    theta_h = train_minimum(config, traj, T_h, tcfg, theta_l, refine)
    back = train_minimum(config, traj, T_l, tcfg, theta_h, refine)
    dist = float(np.linalg.norm(back.values - theta_l.values))
    scale = float(np.linalg.norm(theta_l.values))
    if dist > delta_pair * scale:
        raise BasinMismatchError(
            f"re-training from theta_h at T={T_l} ended {dist / scale:.3g} (relative) from theta_l"
        )
    return theta_l, theta_h


def generalization_ratio(
    config: MlpConfig,
    traj: Trajectory,
    theta_l: ParamVector,
    theta_h: ParamVector,
    T_l: int,
    T_h: int,
    norm_mode: str = "squared",
) -> float:
    """``r = (L(th, T_h) - L(tl, T_h)) / (L(tl, T_l) - L(th, T_l))`` on ``traj``.

    Pass the validation trajectory to evaluate on held-out windows.
    """

    def L(theta, T):
        return horizon_loss(config, theta, traj, HorizonLossConfig(T, norm_mode))

    den = L(theta_l, T_l) - L(theta_h, T_l)
    if abs(den) <= 1e-12:
        raise IndeterminateRatioError("both minima have the same loss at T_l; r is undetermined")
    return (L(theta_h, T_h) - L(theta_l, T_h)) / den


# ---------------------------------------------------------------------------
# epsilon-bounded region


def model_map(
    config: MlpConfig, params: ParamVector, normalization: Optional[tuple] = None
) -> Callable[[np.ndarray], np.ndarray]:
    """One-step MLP forecast in raw coordinates (z-scoring around the call if needed)."""
    if normalization is None:
        return lambda X: forward(config, params, X)[0]
    mean, std = (np.asarray(a, dtype=float) for a in normalization)
    return lambda X: forward(config, params, (np.asarray(X) - mean) / std)[0] * std + mean


def epsilon_region_check(
    config: Optional[MlpConfig],
    params: Optional[ParamVector],
    spec: SystemSpec,
    states,
    epsilon: float,
    n_directions: int = 8,
    seed: int = 0,
    dt: Optional[float] = None,
    normalization: Optional[tuple] = None,
    step_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> tuple:
    """Largest ``||f(x + eps r) - f(x) - J_phi(x) r eps||`` over states and directions.

    ``J_phi`` is the Jacobian of the one-sampling-step flow map of ``spec``
    (step ``dt``, default ``spec.default_dt``).  States are in raw
    coordinates; ``normalization`` wraps an MLP trained on z-scored data.
    ``step_fn`` replaces the MLP by any batched map.  Passes iff the maximum
    is below ``epsilon**2``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    dt = spec.default_dt if dt is None else dt
    f = step_fn if step_fn is not None else model_map(config, params, normalization)
    X = np.atleast_2d(np.asarray(states, dtype=float))
    rng = stream(seed, "directions")
    worst = 0.0
    for x in X:
        J = dynamics.flow_jacobian(spec, x, dt)
        R = rng.normal(size=(n_directions, spec.dim))
        R /= np.linalg.norm(R, axis=1, keepdims=True)
        fx = np.asarray(f(x[None, :]), dtype=float)[0]
        fpert = np.asarray(f(x[None, :] + epsilon * R), dtype=float)
        dev = np.linalg.norm(fpert - fx[None, :] - epsilon * R @ J.T, axis=1)
        worst = max(worst, float(dev.max()))
    return worst, worst < epsilon**2


def model_jacobian(f: Callable[[np.ndarray], np.ndarray], x, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of a batched map at a single state."""
    x = np.asarray(x, dtype=float)
    D = x.size
    E = np.eye(D) * h * np.maximum(1.0, np.abs(x))[:, None]
    fp = np.asarray(f(x[None, :] + E))
    fm = np.asarray(f(x[None, :] - E))
    return ((fp - fm) / (2.0 * np.diag(E))[:, None]).T


# ---------------------------------------------------------------------------
# scans


def param_scan(
    loss_fn: Callable[[np.ndarray], float],
    theta_center,
    dims: Sequence[int],
    ranges: Sequence[tuple],
    n_per_dim: int,
    normalize: bool = False,
) -> LandscapeProbe:
    """Grid-evaluate the loss varying one or two parameter coordinates.

    ``ranges[i] = (lo, hi)`` are absolute values for coordinate ``dims[i]``.
    Evaluations that diverge or return non-finite values are stored as nan
    with ``flag = 1``.  With ``normalize`` losses are divided by the grid
    maximum over finite entries.
    """
    dims = list(dims)
    if len(dims) not in (1, 2) or len(ranges) != len(dims):
        raise ValueError("scan 1 or 2 dimensions with one range each")
    if n_per_dim < 3:
        raise ValueError("n_per_dim must be >= 3")
    for lo, hi in ranges:
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise ValueError("scan ranges must be finite")
    center = np.asarray(theta_center, dtype=float)
    axes = [np.linspace(lo, hi, n_per_dim) for lo, hi in ranges]
    grids = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([g.ravel() for g in grids], axis=1)
    losses = np.empty(coords.shape[0])
    flags = np.zeros(coords.shape[0])
    for k, c in enumerate(coords):
        theta = center.copy()
        theta[dims] = c
        try:
            val = float(loss_fn(theta))
        except (DivergenceError, NumericError, FloatingPointError):
            val = math.nan
        if not math.isfinite(val):
            val, flags[k] = math.nan, 1.0
        losses[k] = val
    if normalize and np.any(flags == 0):
        losses = losses / np.nanmax(losses)
    kind = "scan1d" if len(dims) == 1 else "scan2d"
    rows = np.column_stack([coords, losses, flags])
    inputs = {"dims": dims, "ranges": [list(r) for r in ranges], "n_per_dim": n_per_dim, "normalize": normalize}
    return LandscapeProbe(kind, inputs, rows)


# ---------------------------------------------------------------------------
# noise-limited horizon


def t_max_estimate(kind: str, rate: float, sigma: float, scale: float) -> float:
    """Horizon beyond which noise makes forecasts a random guess.

    ``chaotic``: ``(ln S - ln sigma) / lambda`` with ``rate = lambda`` and
    ``scale = S`` (state-space radius).  ``limit_cycle``: ``L / sigma`` with
    ``scale = L`` (cycle length); ``rate`` is unused.  ``sigma = 0``
    returns ``inf``.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if kind == "chaotic":
        if not rate > 0:
            raise ValueError("lambda must be positive for chaotic systems")
        if not scale > 0:
            raise ValueError("S must be positive")
        if sigma == 0:
            return math.inf
        return (math.log(scale) - math.log(sigma)) / rate
    if kind == "limit_cycle":
        if not scale > 0:
            raise ValueError("L must be positive for limit cycles")
        if sigma == 0:
            return math.inf
        return scale / sigma
    raise ValueError("kind must be 'chaotic' or 'limit_cycle'")
