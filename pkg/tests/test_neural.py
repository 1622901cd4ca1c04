import numpy as np
import pytest

from duetrl.errors import CheckpointError, ContractViolationError
from duetrl.neural import (AdamState, GaussianHead, MlpParams, adam_update,
                           clip_by_global_norm, critic_init, gaussian_entropy,
                           gaussian_log_prob, load_checkpoint, load_policy,
                           mlp_backward, mlp_forward, mlp_init, policy_init,
                           policy_mean_action, policy_sample, save_checkpoint,
                           save_policy, squashed_log_prob, tanh_correction)

LOG_2PI = np.log(2 * np.pi)


# ---------------------------------------------------------------------------
# forward

def test_identity_linear_layer():
    params = MlpParams(weights=[np.eye(4)], biases=[np.zeros(4)])
    x = np.random.default_rng(0).standard_normal(4)
    out, _ = mlp_forward(params, x)
    assert np.array_equal(out, x)


def test_zero_weights_constant_output():
    b = np.array([1.5, -2.0])
    params = MlpParams(weights=[np.zeros((5, 2))], biases=[b])
    for seed in range(3):
        x = np.random.default_rng(seed).standard_normal(5)
        out, _ = mlp_forward(params, x)
        assert np.array_equal(out, b)


def test_forward_matches_matmul_oracle():
    rng = np.random.default_rng(1)
    params = mlp_init([52, 64, 64, 7], rng)
    x = rng.standard_normal((16, 52))
    out, _ = mlp_forward(params, x)
    # independently coded chain
    h = np.tanh(x @ params.weights[0] + params.biases[0])
    h = np.tanh(h @ params.weights[1] + params.biases[1])
    oracle = h @ params.weights[2] + params.biases[2]
    assert np.allclose(out, oracle, atol=1e-12)


def test_forward_dimension_mismatch():
    params = mlp_init([4, 8, 2], np.random.default_rng(0))
    with pytest.raises(ContractViolationError):
        mlp_forward(params, np.zeros(5))


# ---------------------------------------------------------------------------
# backward

def test_linear_layer_gradient_outer_product():
    rng = np.random.default_rng(2)
    params = MlpParams(weights=[rng.standard_normal((3, 2))],
                       biases=[rng.standard_normal(2)])
    x = rng.standard_normal((1, 3))
    c = rng.standard_normal(2)
    out, cache = mlp_forward(params, x)
    grads, dx = mlp_backward(params, cache, c[None, :])
    assert np.allclose(grads[0], np.outer(x[0], c), atol=1e-14)
    assert np.allclose(grads[1], c, atol=1e-14)
    assert np.allclose(dx[0], params.weights[0] @ c, atol=1e-14)


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(3)
    shapes = [[3, 4, 1], [5, 8, 8, 2], [2, 16, 3], [7, 5, 5, 5, 1],
              [4, 4, 4], [6, 12, 2], [3, 3, 1], [8, 6, 4], [2, 2, 2],
              [5, 10, 10, 3]]
    h = 1e-5
    for sizes in shapes:
        params = mlp_init(sizes, rng)
        x = rng.standard_normal((4, sizes[0]))
        w_out = rng.standard_normal(sizes[-1])

        def loss(p):
            out, cache = mlp_forward(p, x)
            return float(np.sum(out * w_out)), cache

        _, cache = loss(params)
        grads, _ = mlp_backward(params, cache,
                                np.broadcast_to(w_out, (4, sizes[-1])).copy())
        worst = 0.0
        for ai, arr in enumerate(params.arrays()):
            for k in range(arr.size):
                orig = arr.flat[k]
                arr.flat[k] = orig + h
                lp = loss(params)[0]
                arr.flat[k] = orig - h
                lm = loss(params)[0]
                arr.flat[k] = orig
                fd = (lp - lm) / (2 * h)
                ga = grads[ai].flat[k]
                worst = max(worst, abs(fd - ga) / max(1e-5, abs(fd) + abs(ga)))
        assert worst < 1e-4


def test_zero_output_gradient_gives_zero_grads():
    params = mlp_init([4, 8, 2], np.random.default_rng(4))
    x = np.random.default_rng(5).standard_normal((3, 4))
    _, cache = mlp_forward(params, x)
    grads, dx = mlp_backward(params, cache, np.zeros((3, 2)))
    assert all(np.all(g == 0.0) for g in grads)
    assert np.all(dx == 0.0)


def test_stale_cache_rejected():
    rng = np.random.default_rng(6)
    p1 = mlp_init([4, 4, 2], rng)
    p2 = mlp_init([4, 4, 2], rng)
    _, cache = mlp_forward(p1, np.zeros((1, 4)))
    with pytest.raises(ContractViolationError):
        mlp_backward(p2, cache, np.zeros((1, 2)))


# ---------------------------------------------------------------------------
# Adam

def test_adam_zero_gradient_keeps_params():
    params = [np.ones((2, 2)), np.ones(3)]
    adam = AdamState.init(params, lr=1e-3)
    new, adam2 = adam_update(adam, params, [np.zeros((2, 2)), np.zeros(3)])
    assert all(np.array_equal(a, b) for a, b in zip(new, params))
    assert adam2.step == 1


def test_adam_first_step_closed_form():
    params = [np.array([0.0])]
    adam = AdamState.init(params, lr=1e-3, eps=1e-8)
    new, _ = adam_update(adam, params, [np.array([1.0])], max_grad_norm=np.inf)
    expected = 1e-3 / (1.0 + 1e-8)
    assert abs(abs(new[0][0]) - expected) < 1e-9


def test_global_norm_clip():
    grads = [np.array([3.0]), np.array([4.0])]   # norm 5
    clipped, norm = clip_by_global_norm(grads, 0.5)
    assert abs(norm - 5.0) < 1e-12
    clipped_norm = np.sqrt(sum(float(np.sum(g * g)) for g in clipped))
    assert abs(clipped_norm - 0.5) < 1e-9


def test_adam_deterministic():
    rng = np.random.default_rng(7)
    params = [rng.standard_normal((4, 4))]
    grads = [rng.standard_normal((4, 4))]
    a1 = AdamState.init(params, lr=1e-3)
    n1, s1 = adam_update(a1, params, grads, 0.5)
    a2 = AdamState.init(params, lr=1e-3)
    n2, s2 = adam_update(a2, params, grads, 0.5)
    assert n1[0].tobytes() == n2[0].tobytes()
    assert s1.m[0].tobytes() == s2.m[0].tobytes()


# ---------------------------------------------------------------------------
# Gaussian heads

def test_sigma_limit_deterministic_action():
    rng = np.random.default_rng(8)
    mu = rng.uniform(-0.5, 0.5, (64, 3))
    logstd = np.full((64, 3), -20.0)   # clamps to the -5 bound
    ppo = GaussianHead("ppo")
    a, _ = policy_sample(ppo, mu, logstd, np.random.default_rng(0))
    assert np.max(np.abs(a - mu)) < 0.05
    sac = GaussianHead("sac")
    a, _, _ = policy_sample(sac, mu, logstd, np.random.default_rng(0))
    assert np.max(np.abs(a - np.tanh(mu))) < 0.05
    assert np.array_equal(policy_mean_action(sac, mu), np.tanh(mu))


def test_density_normalizes_ppo():
    mu, logstd = np.array([0.3]), np.array([-0.4])
    sigma = np.exp(logstd[0])
    grid = np.linspace(mu[0] - 8 * sigma, mu[0] + 8 * sigma, 20001)
    dens = np.exp([gaussian_log_prob(mu, logstd, np.array([a])) for a in grid])
    integral = np.trapezoid(dens.ravel(), grid)
    assert abs(integral - 1.0) < 0.01


def test_density_normalizes_sac():
    mu, logstd = np.array([0.4]), np.array([-0.3])
    grid = np.linspace(-1 + 1e-6, 1 - 1e-6, 40001)
    u = np.arctanh(grid)
    dens = np.exp([squashed_log_prob(mu, logstd, np.array([uu])) for uu in u])
    integral = np.trapezoid(dens.ravel(), grid)
    assert abs(integral - 1.0) < 0.01


def test_log_prob_matches_direct_density_formula():
    rng = np.random.default_rng(9)
    mu = rng.uniform(-1, 1, (32, 4))
    logstd = rng.uniform(-1.5, 0.2, (32, 4))
    ppo = GaussianHead("ppo")
    a, logp = policy_sample(ppo, mu, logstd, np.random.default_rng(1))
    sigma = np.exp(logstd)
    direct = np.sum(-((a - mu) ** 2) / (2 * sigma ** 2)
                    - np.log(sigma * np.sqrt(2 * np.pi)), axis=-1)
    assert np.allclose(logp, direct, atol=1e-9)

    sac = GaussianHead("sac")
    act, logp, u = policy_sample(sac, mu, logstd, np.random.default_rng(2))
    direct = (np.sum(-((u - mu) ** 2) / (2 * sigma ** 2)
                     - np.log(sigma * np.sqrt(2 * np.pi)), axis=-1)
              - np.sum(np.log(1.0 - np.tanh(u) ** 2), axis=-1))
    assert np.allclose(logp, direct, atol=1e-9)


def test_tanh_correction_identity():
    rng = np.random.default_rng(10)
    u = rng.uniform(-4, 4, (100, 3))
    direct = np.sum(np.log(1.0 - np.tanh(u) ** 2), axis=-1)
    assert np.allclose(tanh_correction(u), direct, atol=1e-9)


def test_entropy_formula():
    logstd = np.array([0.1, -0.3])
    expected = np.sum(logstd + 0.5 * (1 + LOG_2PI))
    assert abs(gaussian_entropy(logstd) - expected) < 1e-12


# ---------------------------------------------------------------------------
# checkpoints

def test_checkpoint_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(11)
    arrays = {"w0": rng.standard_normal((8, 4)).astype(np.float32),
              "b0": rng.standard_normal(4).astype(np.float32),
              "logstd": rng.standard_normal(3).astype(np.float32)}
    meta = {"task": "scratch", "algorithm": "ippo", "agent_role": "robot",
            "disability": {"strength_multiplier": 1.0}, "seed": 3}
    p1 = tmp_path / "a.ckpt"
    save_checkpoint(p1, meta, arrays)
    loaded_meta, loaded = load_checkpoint(p1)
    assert loaded_meta["task"] == "scratch"
    for k in arrays:
        assert loaded[k].tobytes() == arrays[k].tobytes()
    p2 = tmp_path / "b.ckpt"
    save_checkpoint(p2, {k: loaded_meta[k] for k in meta}, loaded)
    assert p1.read_bytes() == p2.read_bytes()


def test_policy_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(12)
    policy = policy_init(52, 7, "ppo", rng)
    meta = {"task": "scratch", "algorithm": "ippo", "agent_role": "robot",
            "disability": {}, "seed": 0}
    path = tmp_path / "p.ckpt"
    save_policy(path, policy, meta)
    loaded, lmeta = load_policy(path)
    assert lmeta["head_mode"] == "ppo"
    assert loaded.action_dim == 7
    for a, b in zip(policy.arrays(), loaded.arrays()):
        assert np.array_equal(a.astype(np.float32).astype(np.float64), b)


def test_missing_checkpoint_raises(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.ckpt")


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOMAGICxxxx")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
