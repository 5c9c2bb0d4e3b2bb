import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from horizonlab import dynamics
from horizonlab.arloss import (
    HorizonLossConfig,
    evaluate_horizons,
    horizon_loss,
    horizon_loss_grad,
    horizon_loss_map,
    long_horizon_error,
    loss_upper_bound,
    mechanistic_loss,
    mlp_step,
    rollout,
    window_starts,
)
from horizonlab.errors import DivergenceError, GradientSingularityError
from horizonlab.net import MlpConfig, backward, forward, init

from oracles import central_difference_grad, naive_loss_and_grad


def identity_params(cfg):
    """Residual net whose blocks contribute nothing and whose embed/unembed are [I; 0]."""
    p = init(cfg).copy()
    p.values[:] = 0.0
    v = cfg.input_dim
    p.tensor("embed.W")[:v, :v] = np.eye(v)
    p.tensor("unembed.W")[:, :v] = np.eye(v)
    for k in range(cfg.n_blocks):
        p.tensor(f"block{k}.ln_gain")[:] = 1.0
    return p


def random_params(cfg, seed, scale=0.3):
    p = init(cfg)
    return p.with_values(p.values + scale * np.random.default_rng(seed).normal(size=p.values.size))


def random_traj(M, D, seed):
    return dynamics.Trajectory(np.random.default_rng(seed).normal(size=(M, D)), dt=0.1)


def test_config_validation():
    with pytest.raises(ValueError):
        HorizonLossConfig(0)
    with pytest.raises(ValueError):
        HorizonLossConfig(2, "l1")
    with pytest.raises(ValueError):
        window_starts(random_traj(5, 2, 0), 5)


# --- rollout -----------------------------------------------------------------


def test_rollout_one_step_is_forward():
    cfg = MlpConfig(3, 2, 2)
    p = random_params(cfg, 0)
    x0 = np.array([0.2, -0.1, 0.5])
    np.testing.assert_array_equal(rollout(cfg, p, x0, 1)[0], forward(cfg, p, x0)[0])


def test_rollout_composition():
    cfg = MlpConfig(3, 2, 2)
    p = random_params(cfg, 1, 0.1)
    x0 = np.array([0.2, -0.1, 0.5])
    a, b = 3, 4
    full = rollout(cfg, p, x0, a + b)
    np.testing.assert_allclose(full[a:], rollout(cfg, p, full[a - 1], b), rtol=0, atol=1e-14)


def test_identity_model_rollout():
    cfg = MlpConfig(3, 2, 2)
    x0 = np.array([0.3, -1.2, 2.0])
    R = rollout(cfg, identity_params(cfg), x0, 6)
    np.testing.assert_allclose(R, np.tile(x0, (6, 1)), rtol=0, atol=1e-14)


def test_rollout_divergence_reports_step():
    cfg = MlpConfig(2, 2, 0)
    p = init(cfg)
    p.tensor("embed.W")[:] = 0.0
    p.tensor("embed.W")[:2, :2] = 1e100 * np.eye(2)
    p.tensor("unembed.W")[:, :2] = np.eye(2)
    with pytest.raises(DivergenceError) as info:
        rollout(cfg, p, np.array([1.0, 1.0]), 10)
    assert info.value.step == 4


# --- horizon loss --------------------------------------------------------------


@pytest.mark.parametrize("mode", ("squared", "euclidean"))
def test_perfect_model_zero_loss_every_T(mode):
    cfg = MlpConfig(2, 2, 1)
    traj = dynamics.Trajectory(np.tile([0.4, -0.7], (12, 1)), dt=1.0)
    for T in range(1, 6):
        assert horizon_loss(cfg, identity_params(cfg), traj, HorizonLossConfig(T, mode)) == 0.0


def test_T1_squared_direct_recomputation():
    cfg = MlpConfig(3, 2, 2)
    p = random_params(cfg, 2)
    traj = random_traj(40, 3, 3)
    X = traj.states
    direct = np.mean(np.sum((forward(cfg, p, X[:-1])[0] - X[1:]) ** 2, axis=1))
    assert horizon_loss(cfg, p, traj, HorizonLossConfig(1)) == pytest.approx(direct, rel=1e-14)


@pytest.mark.parametrize("mode", ("squared", "euclidean"))
def test_loss_matches_naive_oracle(mode):
    cfg = MlpConfig(3, 2, 1, activation="softplus")
    p = random_params(cfg, 4)
    traj = random_traj(50, 3, 5)
    ours = horizon_loss(cfg, p, traj, HorizonLossConfig(3, mode))
    ref, _ = naive_loss_and_grad(cfg, p, traj.states, 3, mode)
    assert abs(ours - ref) < 1e-10


@pytest.mark.parametrize("T", (1, 3, 5))
def test_gradient_vs_finite_differences_softplus(T):
    cfg = MlpConfig(3, 4, 2, activation="softplus")
    p = random_params(cfg, 6, 0.2)
    traj = random_traj(30, 3, 7)
    lcfg = HorizonLossConfig(T)
    _, g = horizon_loss_grad(cfg, p, traj, lcfg)
    fd = central_difference_grad(lambda v: horizon_loss(cfg, p.with_values(v), traj, lcfg), p.values, 1e-5)
    assert np.max(np.abs(g.values - fd)) / np.max(np.abs(fd)) < 1e-6


def test_T1_gradient_is_summed_single_step_backward():
    cfg = MlpConfig(3, 2, 2)
    p = random_params(cfg, 8)
    traj = random_traj(20, 3, 9)
    X = traj.states
    y, cache = forward(cfg, p, X[:-1])
    _, dp = backward(cfg, p, cache, 2.0 * (y - X[1:]) / (X.shape[0] - 1))
    _, g = horizon_loss_grad(cfg, p, traj, HorizonLossConfig(1))
    np.testing.assert_allclose(g.values, dp.values, rtol=0, atol=1e-13)


def test_euclidean_homogeneity_linear_model():
    cfg = MlpConfig(3, 2, 0)  # no blocks: f(x) = U E x, linear
    p = random_params(cfg, 10)
    traj = random_traj(30, 3, 11)
    double = dynamics.Trajectory(2.0 * traj.states, dt=traj.dt)
    lcfg = HorizonLossConfig(4, "euclidean")
    l1, g1 = horizon_loss_grad(cfg, p, traj, lcfg)
    l2, g2 = horizon_loss_grad(cfg, p, double, lcfg)
    assert l2 == pytest.approx(2 * l1, rel=1e-12)
    cos = g1.values @ g2.values / (np.linalg.norm(g1.values) * np.linalg.norm(g2.values))
    assert cos > 1 - 1e-10


def test_euclidean_zero_residual_is_singular():
    cfg = MlpConfig(2, 2, 1)
    traj = dynamics.Trajectory(np.tile([0.4, -0.7], (6, 1)), dt=1.0)
    with pytest.raises(GradientSingularityError, match="squared"):
        horizon_loss_grad(cfg, identity_params(cfg), traj, HorizonLossConfig(2, "euclidean"))
    loss, g = horizon_loss_grad(cfg, identity_params(cfg), traj, HorizonLossConfig(2, "squared"))
    assert loss == 0.0 and np.all(g.values == 0)


@settings(max_examples=25, deadline=None)
@given(
    M=st.integers(3, 30),
    T=st.integers(1, 5),
    seed=st.integers(0, 2**16),
    mode=st.sampled_from(["squared", "euclidean"]),
    blocks=st.integers(0, 2),
)
def test_loss_and_gradient_equal_naive_oracle(M, T, seed, mode, blocks):
    if T >= M:
        T = M - 1
    cfg = MlpConfig(2, 2, blocks, activation="softplus")  # at most 2*4 + 2*(16+4+8) + 8 = 72 params
    p = random_params(cfg, seed)
    traj = random_traj(M, 2, seed + 1)
    loss, g = horizon_loss_grad(cfg, p, traj, HorizonLossConfig(T, mode))
    ref_loss, ref_g = naive_loss_and_grad(cfg, p, traj.states, T, mode)
    assert abs(loss - ref_loss) < 1e-10
    assert np.max(np.abs(g.values - ref_g)) < 1e-10


def test_batch_subset_and_permutation_invariance():
    cfg = MlpConfig(3, 2, 1)
    p = random_params(cfg, 12)
    traj = random_traj(40, 3, 13)
    idx = np.array([3, 17, 5, 30, 8])
    a = horizon_loss(cfg, p, traj, HorizonLossConfig(3, batch=idx))
    b = horizon_loss(cfg, p, traj, HorizonLossConfig(3, batch=idx[::-1]))
    assert abs(a - b) < 1e-12
    full = horizon_loss(cfg, p, traj, HorizonLossConfig(3))
    shuffled = horizon_loss(cfg, p, traj, HorizonLossConfig(3, batch=np.random.default_rng(0).permutation(37)))
    assert abs(full - shuffled) < 1e-12
    with pytest.raises(ValueError):
        horizon_loss(cfg, p, traj, HorizonLossConfig(3, batch=[37]))


def test_loss_map_agrees_with_mlp_loss():
    cfg = MlpConfig(3, 2, 1)
    p = random_params(cfg, 14)
    traj = random_traj(25, 3, 15)
    lcfg = HorizonLossConfig(4)
    assert horizon_loss_map(mlp_step(cfg, p), traj, lcfg) == horizon_loss(cfg, p, traj, lcfg)


# --- mechanistic loss ----------------------------------------------------------


@pytest.fixture(scope="module")
def lorenz_data():
    spec = dynamics.make_system("lorenz")
    return spec, dynamics.simulate(spec, 600, seed=0, method="rk4")


def test_mechanistic_loss_zero_at_truth(lorenz_data):
    spec, traj = lorenz_data
    for T in (1, 10, 100):
        assert mechanistic_loss(spec, spec.theta, traj, T) < 1e-8


def test_mechanistic_T1_is_sum_of_one_step_errors(lorenz_data):
    spec, traj = lorenz_data
    theta = spec.theta * np.array([1.01, 0.99, 1.0])
    model = spec.with_params(theta)
    X = traj.states
    direct = sum(np.linalg.norm(dynamics.integrate(model, X[m], traj.dt, 1).states[1] - X[m + 1]) for m in range(traj.M - 1))
    assert mechanistic_loss(spec, theta, traj, 1) == pytest.approx(direct, rel=1e-12)


def test_mechanistic_error_accumulates_with_T(lorenz_data):
    spec, traj = lorenz_data
    theta = spec.theta * np.array([1.01, 1.0, 1.0])
    assert mechanistic_loss(spec, theta, traj, 10) < mechanistic_loss(spec, theta, traj, 200)


def test_mechanistic_segments_stride_T():
    # M=11, T=3 -> segment starts 0, 3, 6 (a start at 9 would need sample 12)
    spec = dynamics.external_system(lambda x, p: p[0] * np.ones_like(x), 1, params=(0.0,), dt=1.0)
    traj = dynamics.Trajectory(np.zeros((11, 1)), dt=1.0)
    # with drift c each predicted step tau errs by c*tau; segments m=0,1,2 -> 3 * (1+2+3) * c
    assert mechanistic_loss(spec, [0.5], traj, 3) == pytest.approx(3 * 6 * 0.5, rel=1e-12)


def test_mechanistic_dopri5_route():
    spec = dynamics.make_system("lorenz")
    traj = dynamics.simulate(spec, 200, seed=1, method="dopri5")
    assert mechanistic_loss(spec, spec.theta, traj, 5, integrator="dopri5") < 1e-5


# --- loss bound -------------------------------------------------------------------


def test_upper_bound_trivial_cases():
    traj = dynamics.Trajectory(np.ones((2, 3)), dt=1.0)
    assert loss_upper_bound(traj, 0.0) == 0.0
    assert loss_upper_bound(traj, 0.5) == 1.0


def test_upper_bound_matches_bruteforce_and_dominates_losses():
    rng = np.random.default_rng(16)
    traj = dynamics.Trajectory(rng.normal(0, 3, size=(300, 3)), dt=1.0)
    X = traj.states
    brute = max(np.sum((a - b) ** 2) for a in X for b in X)
    bound = loss_upper_bound(traj, 0.0)
    assert bound == pytest.approx(brute, rel=1e-12)
    cfg = MlpConfig(3, 4, 2)
    for seed in range(20):
        p = init(MlpConfig(3, 4, 2, seed=seed))
        assert horizon_loss(cfg, p, traj, HorizonLossConfig(3)) <= bound


# --- long-horizon error --------------------------------------------------------------


def test_true_flow_is_perfect_at_short_horizon():
    spec = dynamics.make_system("lorenz")
    flow = lambda Y: dynamics.rk4_path(spec, Y, spec.default_dt, 1)[-1]  # noqa: E731
    mse, scale = long_horizon_error(None, None, spec, 50, 10, step_fn=flow, n_attractor=1000)
    assert 10 * spec.default_dt < 1 / 0.9
    assert mse < 1e-6 * scale


def test_constant_model_ratio_half():
    spec = dynamics.make_system("lorenz")
    attractor = dynamics.simulate(spec, 4000, seed=0, method="rk4").states
    norm = (attractor.mean(axis=0), attractor.std(axis=0))
    zero = lambda Y: np.zeros_like(Y)  # noqa: E731
    mse, scale = long_horizon_error(None, None, spec, 2000, 1, step_fn=zero, normalization=norm, n_attractor=4000)
    assert mse / scale == pytest.approx(0.5, abs=0.05)


# --- evaluation --------------------------------------------------------------------


def test_evaluate_horizons_contract():
    cfg = MlpConfig(2, 2, 1)
    const = dynamics.Trajectory(np.tile([0.1, 0.2], (30, 1)), dt=1.0)
    assert evaluate_horizons(cfg, identity_params(cfg), const, [1, 5, 20]) == {1: 0.0, 5: 0.0, 20: 0.0}
    p = random_params(cfg, 17)
    traj = random_traj(30, 2, 18)
    out = evaluate_horizons(cfg, p, traj, [3, 1])
    assert list(out) == [3, 1]
    X = traj.states
    Y = X[:27]
    for _ in range(3):
        Y = forward(cfg, p, Y)[0]
    assert out[3] == pytest.approx(np.mean(np.sum((Y - X[3:30]) ** 2, axis=1)), rel=1e-13)
    with pytest.raises(ValueError):
        evaluate_horizons(cfg, p, traj, [30])
