"""Dynamical systems: vector fields, integrators, flow Jacobians, Lyapunov spectra.

Four built-in systems are provided (Lorenz, double pendulum, a 7-species food
web and a planar limit cycle) plus ``external`` systems backed by a user
vector field.  States are numpy arrays whose last axis is the state
dimension; most functions accept a batch of states of shape ``(B, D)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DegenerateDataError, DivergenceError, NumericError
from .seeding import stream

KINDS = ("lorenz", "double_pendulum", "food_web", "limit_cycle", "external")

RK4_MAX_STEP = 0.005
DOPRI_RTOL = 1e-9
DOPRI_ATOL = 1e-9
BLOWUP = 1e12

# Point-mass double pendulum.  The equations of motion are not printed with
# the system description (only the position map is), so the constants are
# fixed here: m1, m2, l1, l2, g.
DOUBLE_PENDULUM_PARAMS = (1.0, 1.0, 1.0, 1.0, 9.81)

LORENZ_PARAMS = (10.0, 28.0, 8.0 / 3.0)
LIMIT_CYCLE_PARAMS = (1.0, 0.4)

# Food web: non-zero entries of r, alpha, H and q, then omega.  W is fixed
# apart from omega.
_FW_ALPHA_IDX = ((0, 0), (3, 3))
_FW_PREDATION_IDX = ((1, 0), (2, 1), (2, 4), (4, 3), (5, 2), (6, 5))
_FW_R = (1.0, -0.15, -0.08, 1.0, -0.15, -0.01, -0.005)
_FW_ALPHA = (1.0, 1.0)
_FW_H = (2.89855, 7.35294, 7.35294, 2.89855, 8.0, 12.0)
_FW_Q = (1.38, 0.272, 0.272, 1.38, 0.1, 0.05)
_FW_OMEGA = 0.2
FOOD_WEB_PARAMS = _FW_R + _FW_ALPHA + _FW_H + _FW_Q + (_FW_OMEGA,)

PARAM_NAMES = {
    "lorenz": ("sigma", "rho", "beta"),
    "double_pendulum": ("m1", "m2", "l1", "l2", "g"),
    "limit_cycle": ("a", "mu"),
    "food_web": tuple(f"r{i}" for i in range(7))
    + tuple(f"alpha{i}{j}" for i, j in _FW_ALPHA_IDX)
    + tuple(f"H{i}{j}" for i, j in _FW_PREDATION_IDX)
    + tuple(f"q{i}{j}" for i, j in _FW_PREDATION_IDX)
    + ("omega",),
}
DIMS = {"lorenz": 3, "double_pendulum": 4, "food_web": 7, "limit_cycle": 2}
DEFAULT_PARAMS = {
    "lorenz": LORENZ_PARAMS,
    "double_pendulum": DOUBLE_PENDULUM_PARAMS,
    "food_web": FOOD_WEB_PARAMS,
    "limit_cycle": LIMIT_CYCLE_PARAMS,
}
DEFAULT_DT = {"lorenz": 0.04, "double_pendulum": 0.005, "food_web": 2.0, "limit_cycle": 0.5}


@dataclass(frozen=True)
class SystemSpec:
    """A named ODE with its parameters and sampling timestep.

    ``hopf_normal_form`` only affects ``limit_cycle``: when False the second
    equation uses ``-x(x^2+y^2)`` exactly as printed in the source model
    description, which has no bounded attractor.  ``printed_trophic_sign``
    only affects ``food_web``: when True the trophic terms enter with the
    printed sign, under which every consumer goes extinct.
    """

    kind: str
    params: tuple
    dim: int
    default_dt: float
    hopf_normal_form: bool = True
    printed_trophic_sign: bool = False
    vector_field: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = field(
        default=None, compare=False
    )

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown system kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if self.dim <= 0:
            raise ValueError("dim must be positive")
        if not self.default_dt > 0:
            raise ValueError("default_dt must be positive")
        if self.kind == "external":
            if self.vector_field is None:
                raise ValueError("external systems need a vector_field callable")
            return
        if self.dim != DIMS[self.kind]:
            raise ValueError(f"{self.kind} has dimension {DIMS[self.kind]}, got {self.dim}")
        n = len(PARAM_NAMES[self.kind])
        if len(self.params) != n:
            raise ValueError(f"{self.kind} takes {n} parameters, got {len(self.params)}")

    @property
    def theta(self) -> np.ndarray:
        return np.asarray(self.params, dtype=float)

    @property
    def param_names(self) -> tuple:
        if self.kind == "external":
            return tuple(f"p{i}" for i in range(len(self.params)))
        return PARAM_NAMES[self.kind]

    def with_params(self, theta) -> "SystemSpec":
        theta = tuple(np.asarray(theta, dtype=float).ravel())
        if len(theta) != len(self.params):
            raise ValueError(f"expected {len(self.params)} parameters, got {len(theta)}")
        return replace(self, params=theta)


def make_system(
    kind: str,
    params: Optional[Sequence[float]] = None,
    dt: Optional[float] = None,
    **flags,
) -> SystemSpec:
    """Build a built-in system with default parameters unless overridden."""
    if kind == "external":
        raise ValueError("use external_system() for user vector fields")
    if kind not in DIMS:
        raise ValueError(f"unknown system kind {kind!r}")
    return SystemSpec(
        kind=kind,
        params=tuple(params) if params is not None else DEFAULT_PARAMS[kind],
        dim=DIMS[kind],
        default_dt=DEFAULT_DT[kind] if dt is None else dt,
        **flags,
    )


def external_system(vector_field, dim: int, params=(), dt: float = 0.1) -> SystemSpec:
    """Wrap ``vector_field(x, params) -> dx/dt`` as a system.

    The callable must accept states with a trailing axis of length ``dim``
    (and therefore batches of shape ``(B, dim)``).
    """
    return SystemSpec(
        kind="external", params=tuple(params), dim=dim, default_dt=dt, vector_field=vector_field
    )


# ---------------------------------------------------------------------------
# vector fields


def _food_web_matrices(p: np.ndarray):
    r = p[0:7]
    alpha = np.zeros((7, 7))
    for k, (i, j) in enumerate(_FW_ALPHA_IDX):
        alpha[i, j] = p[7 + k]
    H = np.zeros((7, 7))
    q = np.zeros((7, 7))
    for k, (i, j) in enumerate(_FW_PREDATION_IDX):
        H[i, j] = p[9 + k]
        q[i, j] = p[15 + k]
    omega = p[21]
    W = np.zeros((7, 7))
    W[1, 0] = 1.0
    W[2, 1] = omega
    W[2, 4] = 1.0
    W[4, 3] = 1.0 - omega
    W[5, 2] = 1.0
    W[6, 5] = 1.0
    return r, alpha, W, H, q


def _food_web_terms(spec: SystemSpec, N: np.ndarray):
    r, alpha, W, H, q = _food_web_matrices(spec.theta)
    s = 1.0 if spec.printed_trophic_sign else -1.0
    avail = N @ W.T  # (..., 7): prey available to each consumer i
    qW = q * W
    qH = q * H
    denom = 1.0 + qH * avail[..., :, None]
    F = qW / denom  # (..., 7, 7) feeding rate of i on j
    A = alpha + s * (F - np.swapaxes(F, -1, -2))
    growth = r - np.einsum("...ij,...j->...i", A, N)
    return growth, A, F, qH, denom, W, s


def _rhs(spec: SystemSpec, x: np.ndarray) -> np.ndarray:
    p = spec.params
    kind = spec.kind
    if kind == "lorenz":
        sigma, rho, beta = p
        X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
        return np.stack([sigma * (Y - X), X * (rho - Z) - Y, X * Y - beta * Z], axis=-1)
    if kind == "limit_cycle":
        a, mu = p
        X, Y = x[..., 0], x[..., 1]
        r2 = X * X + Y * Y
        cubic = Y if spec.hopf_normal_form else X
        return np.stack([a * (mu * X - Y - X * r2), a * (X + mu * Y - cubic * r2)], axis=-1)
    if kind == "double_pendulum":
        omega1, omega2 = x[..., 2], x[..., 3]
        acc1, acc2 = _pendulum_accel(p, x)
        return np.stack([omega1, omega2, acc1, acc2], axis=-1)
    if kind == "food_web":
        growth = _food_web_terms(spec, x)[0]
        return x * growth
    return np.asarray(spec.vector_field(x, spec.theta), dtype=float)


def _pendulum_accel(p, x):
    # M(theta) [acc1, acc2] = rhs(theta, omega)
    m1, m2, l1, l2, g = p
    th1, th2, w1, w2 = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
    d = th1 - th2
    c, s = np.cos(d), np.sin(d)
    m11 = (m1 + m2) * l1
    m12 = m2 * l2 * c
    m21 = l1 * c
    m22 = l2
    f1 = -m2 * l2 * w2 * w2 * s - (m1 + m2) * g * np.sin(th1)
    f2 = l1 * w1 * w1 * s - g * np.sin(th2)
    det = m11 * m22 - m12 * m21
    return (m22 * f1 - m12 * f2) / det, (m11 * f2 - m21 * f1) / det


def _check_state(spec: SystemSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != spec.dim:
        raise ValueError(f"{spec.kind} state must have trailing length {spec.dim}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NumericError("state contains non-finite values")
    return x


def derivative(spec: SystemSpec, x) -> np.ndarray:
    """Evaluate dx/dt at ``x`` (shape ``(D,)`` or ``(B, D)``)."""
    return _rhs(spec, _check_state(spec, x))


def jacobian(spec: SystemSpec, x) -> np.ndarray:
    """Jacobian of the vector field at a single state ``x``.

    Analytic for the built-in systems; external systems use central
    differences with step ``1e-6 * max(1, |x_i|)``.
    """
    x = _check_state(spec, x)
    if x.ndim != 1:
        raise ValueError("jacobian takes a single state vector")
    return _jac(spec, x)


def _jac(spec: SystemSpec, x: np.ndarray) -> np.ndarray:
    p = spec.params
    kind = spec.kind
    if kind == "lorenz":
        sigma, rho, beta = p
        X, Y, Z = x
        return np.array([[-sigma, sigma, 0.0], [rho - Z, -1.0, -X], [Y, X, -beta]])
    if kind == "limit_cycle":
        a, mu = p
        X, Y = x
        r2 = X * X + Y * Y
        row0 = [mu - r2 - 2 * X * X, -1.0 - 2 * X * Y]
        if spec.hopf_normal_form:
            row1 = [1.0 - 2 * X * Y, mu - r2 - 2 * Y * Y]
        else:
            row1 = [1.0 - r2 - 2 * X * X, mu - 2 * X * Y]
        return a * np.array([row0, row1])
    if kind == "double_pendulum":
        return _pendulum_jac(p, x)
    if kind == "food_web":
        return _food_web_jac(spec, x)
    return _fd_jacobian(lambda z: _rhs(spec, z), x)


def _fd_jacobian(fn, x: np.ndarray) -> np.ndarray:
    D = x.shape[0]
    out = np.empty((D, D))
    for i in range(D):
        h = 1e-6 * max(1.0, abs(x[i]))
        e = np.zeros(D)
        e[i] = h
        out[:, i] = (fn(x + e) - fn(x - e)) / (2 * h)
    return out


def _pendulum_jac(p, x):
    m1, m2, l1, l2, g = p
    th1, th2, w1, w2 = x
    d = th1 - th2
    c, s = math.cos(d), math.sin(d)
    M = np.array([[(m1 + m2) * l1, m2 * l2 * c], [l1 * c, l2]])
    acc = np.array(_pendulum_accel(p, x))
    # d rhs / d(th1, th2, w1, w2)
    dF = np.array(
        [
            [-m2 * l2 * w2 * w2 * c - (m1 + m2) * g * math.cos(th1), m2 * l2 * w2 * w2 * c, 0.0, -2 * m2 * l2 * w2 * s],
            [l1 * w1 * w1 * c, -l1 * w1 * w1 * c - g * math.cos(th2), 2 * l1 * w1 * s, 0.0],
        ]
    )
    # d M / d th1 = -d M / d th2 = [[0, -m2 l2 s], [-l1 s, 0]]
    dM_acc = np.array([-m2 * l2 * s * acc[1], -l1 * s * acc[0]])
    dF[:, 0] -= dM_acc
    dF[:, 1] += dM_acc
    J = np.zeros((4, 4))
    J[0, 2] = 1.0
    J[1, 3] = 1.0
    J[2:, :] = np.linalg.solve(M, dF)
    return J


def _food_web_jac(spec: SystemSpec, N: np.ndarray) -> np.ndarray:
    growth, A, F, qH, denom, W, s = _food_web_terms(spec, N)
    G = F * qH / denom  # dF_ij/dN_l = -G_ij W_il
    # sum_j N_j dA_ij/dN_l = s * (-W_il (G N)_i + (G^T diag(N) W)_il)
    dsum = s * (-W * (G @ N)[:, None] + (G.T * N) @ W)
    dgrowth = -A - dsum
    return np.diag(growth) + N[:, None] * dgrowth


# ---------------------------------------------------------------------------
# integration


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled states ``states[m] = x(t0 + m*dt)``.

    ``normalization`` holds the per-dimension ``(mean, std)`` that map the
    stored states back to raw coordinates, ``raw = states*std + mean``.
    """

    states: np.ndarray
    dt: float
    t0: float = 0.0
    seed: int = 0
    noise_sigma: float = 0.0
    normalization: Optional[tuple] = None
    system: Optional[str] = None
    params: Optional[tuple] = None

    def __post_init__(self):
        states = np.array(self.states, dtype=float)
        if states.ndim != 2 or states.shape[0] < 2:
            raise ValueError(f"trajectory needs an M x D matrix with M >= 2, got shape {states.shape}")
        if not np.all(np.isfinite(states)):
            raise NumericError("trajectory contains non-finite values")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        states.setflags(write=False)
        object.__setattr__(self, "states", states)
        if self.normalization is not None:
            mean, std = (np.array(a, dtype=float) for a in self.normalization)
            if mean.shape != (states.shape[1],) or std.shape != (states.shape[1],):
                raise ValueError("normalization arrays must have one entry per dimension")
            if not np.all(std > 0):
                raise ValueError("normalization std entries must be positive")
            mean.setflags(write=False)
            std.setflags(write=False)
            object.__setattr__(self, "normalization", (mean, std))

    @property
    def M(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.M)

    def raw_states(self) -> np.ndarray:
        if self.normalization is None:
            return self.states.copy()
        mean, std = self.normalization
        return self.states * std + mean


def _substeps(dt: float) -> tuple[int, float]:
    n = max(1, math.ceil(dt / RK4_MAX_STEP - 1e-9))
    return n, dt / n


def _rk4_step(fn, x, h):
    k1 = fn(x)
    k2 = fn(x + 0.5 * h * k1)
    k3 = fn(x + 0.5 * h * k2)
    k4 = fn(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _check_blowup(x, step):
    if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > BLOWUP:
        raise DivergenceError(f"integration diverged at step {step}", step=step)


def rk4_path(spec: SystemSpec, x0, dt: float, steps: int) -> np.ndarray:
    """Fixed-step RK4 samples at multiples of ``dt``.

    ``x0`` may be a batch ``(B, D)``; the result has shape ``(steps+1, *x0.shape)``.
    Each sampling interval is split into ``ceil(dt / RK4_MAX_STEP)`` equal substeps.
    """
    x = _check_state(spec, x0)
    n_sub, h = _substeps(dt)
    fn = lambda z: _rhs(spec, z)  # noqa: E731
    out = np.empty((steps + 1,) + x.shape)
    out[0] = x
    for k in range(1, steps + 1):
        for _ in range(n_sub):
            x = _rk4_step(fn, x, h)
        _check_blowup(x, k)
        out[k] = x
    return out


def _dopri_path(fn_flat, y0, dt, steps):
    def blowup(t, y):
        return BLOWUP - np.max(np.abs(y))

    blowup.terminal = True
    t_eval = dt * np.arange(steps + 1)
    sol = solve_ivp(
        lambda t, y: fn_flat(y),
        (0.0, t_eval[-1]),
        y0,
        method="RK45",
        rtol=DOPRI_RTOL,
        atol=DOPRI_ATOL,
        t_eval=t_eval,
        events=blowup,
    )
    if sol.status != 0 or sol.y.shape[1] != steps + 1 or not np.all(np.isfinite(sol.y)):
        t_fail = sol.t[-1] if sol.t.size else 0.0
        step = min(steps, int(t_fail / dt) + 1)
        raise DivergenceError(f"integration diverged at step {step}", step=step)
    return sol.y.T


def integrate(spec: SystemSpec, x0, dt: float, steps: int, method: str = "rk4", seed: int = 0) -> Trajectory:
    """Integrate from ``x0`` and sample ``steps`` intervals of length ``dt``.

    ``rk4`` uses fixed substeps of at most ``RK4_MAX_STEP`` (0.005) time units; ``dopri5`` uses
    adaptive Dormand-Prince with rtol = atol = 1e-9.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x0 = _check_state(spec, x0)
    if x0.ndim != 1:
        raise ValueError("integrate takes a single initial state; use rk4_path for batches")
    if method == "rk4":
        states = rk4_path(spec, x0, dt, steps)
    elif method == "dopri5":
        states = _dopri_path(lambda y: _rhs(spec, y), x0, dt, steps)
    else:
        raise ValueError(f"unknown integration method {method!r}")
    return Trajectory(states=states, dt=dt, seed=seed, system=spec.kind, params=spec.params)


def _flow_and_jacobian(spec: SystemSpec, x, delta_t: float, method: str = "rk4"):
    x = _check_state(spec, x)
    if x.ndim != 1:
        raise ValueError("flow Jacobians take a single state vector")
    if not delta_t > 0:
        raise ValueError("delta_t must be positive")
    D = spec.dim
    if method == "rk4":
        n_sub, h = _substeps(delta_t)

        def aug(state):
            z, J = state
            return _rhs(spec, z), _jac(spec, z) @ J

        z, J = x, np.eye(D)
        for _ in range(n_sub):
            k1 = aug((z, J))
            k2 = aug((z + 0.5 * h * k1[0], J + 0.5 * h * k1[1]))
            k3 = aug((z + 0.5 * h * k2[0], J + 0.5 * h * k2[1]))
            k4 = aug((z + h * k3[0], J + h * k3[1]))
            z = z + (h / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            J = J + (h / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        _check_blowup(z, 1)
        return z, J
    if method == "dopri5":

        def fn_flat(y):
            z, J = y[:D], y[D:].reshape(D, D)
            return np.concatenate([_rhs(spec, z), (_jac(spec, z) @ J).ravel()])

        y = _dopri_path(fn_flat, np.concatenate([x, np.eye(D).ravel()]), delta_t, 1)[-1]
        return y[:D], y[D:].reshape(D, D)
    raise ValueError(f"unknown integration method {method!r}")


def flow_jacobian(spec: SystemSpec, x, delta_t: float, method: str = "rk4") -> np.ndarray:
    """Jacobian of the time-``delta_t`` flow map at ``x`` via the variational equation."""
    return _flow_and_jacobian(spec, x, delta_t, method)[1]


def flow_map(spec: SystemSpec, x, delta_t: float) -> np.ndarray:
    """Advance state(s) ``x`` by ``delta_t`` with the RK4 integrator."""
    return rk4_path(spec, x, delta_t, 1)[-1]


def lyapunov_spectrum(
    spec: SystemSpec, x0, dt: float, n_steps: int, discard: int = 0, method: str = "rk4"
) -> np.ndarray:
    """Benettin QR estimate of the Lyapunov spectrum, per unit system time.

    The tangent frame is pushed through the flow Jacobian over each
    interval ``dt`` and re-orthonormalized; log growth factors are averaged
    over the steps after ``discard``.  Returned sorted descending.
    """
    if not n_steps > discard >= 0:
        raise ValueError("need n_steps > discard >= 0")
    x = _check_state(spec, x0)
    Q = np.eye(spec.dim)
    acc = np.zeros(spec.dim)
    for k in range(n_steps):
        x, J = _flow_and_jacobian(spec, x, dt, method)
        Q, R = np.linalg.qr(J @ Q)
        diag = np.diag(R)
        Q = Q * np.sign(diag)
        if k >= discard:
            acc += np.log(np.abs(diag))
    return np.sort(acc / ((n_steps - discard) * dt))[::-1]


# ---------------------------------------------------------------------------
# data preparation


def initial_condition(spec: SystemSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw a random initial state suited to each built-in system."""
    kind = spec.kind
    if kind == "lorenz":
        return rng.normal(0.0, 1.0, 3) + np.array([1.0, 1.0, 20.0])
    if kind == "double_pendulum":
        return np.concatenate([rng.normal(2.0, 0.1, 2), np.zeros(2)])  # chaotic regime (lambda_1 ~ 1.3)
    if kind == "food_web":
        return np.clip(rng.normal(1.0, 0.1, 7), 1e-6, None)
    if kind == "limit_cycle":
        return rng.normal(0.0, 0.5, 2)
    return rng.normal(0.0, 1.0, spec.dim)


def simulate(
    spec: SystemSpec,
    n_samples: int,
    seed: int = 0,
    dt: Optional[float] = None,
    method: str = "dopri5",
    transient: float = 0.2,
    x0=None,
) -> Trajectory:
    """Generate a trajectory of ``n_samples`` rows after discarding a transient.

    The first ``transient`` fraction of the generated samples is dropped so
    the kept part approximates the stationary distribution.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    if not 0.0 <= transient < 1.0:
        raise ValueError("transient must be in [0, 1)")
    dt = spec.default_dt if dt is None else dt
    if x0 is None:
        x0 = initial_condition(spec, stream(seed, "initial_condition"))
    total = math.ceil(n_samples / (1.0 - transient))
    traj = integrate(spec, x0, dt, total - 1, method=method, seed=seed)
    drop = total - n_samples
    return Trajectory(
        states=traj.states[drop:],
        dt=dt,
        t0=drop * dt,
        seed=seed,
        system=spec.kind,
        params=spec.params,
    )


def add_observation_noise(traj: Trajectory, sigma: float, seed: int) -> Trajectory:
    """Add i.i.d. N(0, sigma^2) noise to every entry."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        states = traj.states
    else:
        noise = stream(seed, "noise").normal(0.0, sigma, traj.states.shape)
        states = traj.states + noise
    return replace(traj, states=states, noise_sigma=float(sigma), seed=seed)


def normalize(traj: Trajectory) -> Trajectory:
    """Z-score every dimension; the stored normalization maps back to raw units."""
    states = traj.states
    mean = states.mean(axis=0)
    std = states.std(axis=0)
    for i, s in enumerate(std):
        if not s > 0:
            raise DegenerateDataError(f"dimension {i} has zero variance", dim=i)
    z = (states - mean) / std
    if traj.normalization is not None:
        m0, s0 = traj.normalization
        mean, std = m0 + s0 * mean, s0 * std
    return replace(traj, states=z, normalization=(mean, std))


def denormalize(traj: Trajectory) -> Trajectory:
    """Return the trajectory in raw units with no normalization attached."""
    return replace(traj, states=traj.raw_states(), normalization=None)
