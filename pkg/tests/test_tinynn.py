import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bbcirl import tinynn
from bbcirl.errors import ConfigError, UsageError
from bbcirl.tinynn import NetSpec, Network, grad_log_prob, mlp_new, policy_forward, sgd_step

from .conftest import onehot


def fd_grad(f, params, h=1e-5):
    g = np.zeros_like(params)
    for i in range(len(params)):
        p1, p2 = params.copy(), params.copy()
        p1[i] += h
        p2[i] -= h
        g[i] = (f(p1) - f(p2)) / (2 * h)
    return g


def max_rel_err(a, b, floor=1e-6):
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def test_param_counts():
    assert NetSpec((49, 16, 3)).n_params == 50 * 16 + 17 * 3
    assert mlp_new(NetSpec((49, 16, 3))).params.shape == (851,)
    assert len(tinynn.last_layer(mlp_new(NetSpec((49, 16, 3))))) == 51
    assert len(tinynn.last_layer(mlp_new(NetSpec((49, 20, 1), "linear")))) == 21


def test_init_is_seeded_and_bounded():
    a, b = mlp_new(NetSpec((49, 16, 3), init_seed=4)), mlp_new(NetSpec((49, 16, 3), init_seed=4))
    assert np.array_equal(a.params, b.params)
    assert not np.array_equal(a.params, mlp_new(NetSpec((49, 16, 3), init_seed=5)).params)
    (W1, b1), (W2, b2) = a.layers()
    assert np.abs(W1).max() <= 1 / 7 and np.abs(b1).max() <= 1 / 7
    assert np.abs(W2).max() <= 0.25 and np.abs(b2).max() <= 0.25


@pytest.mark.parametrize("sizes,head", [((49,), "softmax"), ((49, 16, 4), "softmax"),
                                        ((49, 20, 2), "linear"), ((49, 0, 3), "softmax"),
                                        ((49, 3), "tanh")])
def test_invalid_specs(sizes, head):
    with pytest.raises(ConfigError):
        mlp_new(NetSpec(sizes, head))


def test_zero_net_is_uniform():
    net = tinynn.zeros_like_spec(NetSpec((49, 16, 3)))
    assert np.allclose(policy_forward(net, onehot(5)), 1 / 3)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 48),
       st.sampled_from([(49, 16, 3), (49, 3), (49, 8, 8, 3)]))
def test_policy_is_distribution(seed, s, sizes):
    p = policy_forward(mlp_new(NetSpec(sizes, init_seed=seed)), onehot(s))
    assert np.all(p > 0) and abs(p.sum() - 1) < 1e-9


def test_policy_table_matches_forward():
    net = mlp_new(NetSpec((49, 8, 8, 3), init_seed=2))
    table = tinynn.policy_table(net)
    for s in range(49):
        assert np.allclose(table[s], policy_forward(net, onehot(s)), atol=1e-15)
    beta = mlp_new(NetSpec((49, 20, 1), "linear", 3))
    vt = tinynn.value_table(beta)
    assert np.allclose(vt, [tinynn.value(beta, onehot(s)) for s in range(49)], atol=1e-15)


def test_last_hidden_table_single_layer_is_identity():
    net = mlp_new(NetSpec((49, 3)))
    assert np.array_equal(tinynn.last_hidden_table(net), np.eye(49))


def test_raising_a_logit_weight_raises_its_probability():
    net = mlp_new(NetSpec((49, 16, 3), init_seed=1))
    s = 10
    h = tinynn.last_hidden_table(net)[s]
    unit = int(np.argmax(h))
    assert h[unit] > 0
    before = policy_forward(net, onehot(s))[2]
    W2 = net.layers()[1][0]
    W2[2, unit] += 0.5
    assert policy_forward(net, onehot(s))[2] > before


def test_score_at_zero_weights():
    net = tinynn.zeros_like_spec(NetSpec((49, 16, 3)))
    g = grad_log_prob(net, onehot(0), 0)
    _, bias = net.spec.layer_slices()[-1]
    assert np.allclose(g[bias], [2 / 3, -1 / 3, -1 / 3])


@pytest.mark.parametrize("mode", ["log", "plain"])
def test_score_matches_finite_differences(mode):
    rng = np.random.default_rng(0)
    worst = 0.0
    for i in range(24):
        sizes = [(49, 16, 3), (49, 3), (49, 6, 5, 3)][i % 3]
        net = mlp_new(NetSpec(sizes, init_seed=int(rng.integers(1 << 30))))
        s, a = int(rng.integers(49)), int(rng.integers(3))
        x = onehot(s)

        def f(p):
            pr = policy_forward(Network(net.spec, p), x)[a]
            return np.log(pr) if mode == "log" else pr

        worst = max(worst, max_rel_err(grad_log_prob(net, x, a, mode), fd_grad(f, net.params)))
    assert worst < 1e-4


def test_plain_mode_is_prob_times_score():
    net = mlp_new(NetSpec((49, 16, 3), init_seed=9))
    x = onehot(3)
    p = policy_forward(net, x)
    for a in range(3):
        assert np.allclose(grad_log_prob(net, x, a, "plain"), p[a] * grad_log_prob(net, x, a, "log"))


def test_score_has_zero_mean_under_policy():
    net = mlp_new(NetSpec((49, 16, 3), init_seed=2))
    x = onehot(8)
    p = policy_forward(net, x)
    scores = np.array([grad_log_prob(net, x, a) for a in range(3)])
    assert np.allclose(p @ scores, 0, atol=1e-14)
    # Monte-Carlo version over 10^5 sampled actions
    acts = np.random.default_rng(0).choice(3, size=100_000, p=p)
    samples = scores[acts]
    mean = samples.mean(axis=0)
    se = samples.std(axis=0) / np.sqrt(len(samples))
    assert np.all(np.abs(mean) <= 3 * se + 1e-12)


def test_grad_log_prob_errors():
    net = mlp_new(NetSpec((49, 16, 3)))
    with pytest.raises(UsageError):
        grad_log_prob(net, onehot(0, 48), 0)
    with pytest.raises(UsageError):
        grad_log_prob(net, onehot(0), 3)
    with pytest.raises(UsageError):
        grad_log_prob(net, onehot(0), 0, "other")
    with pytest.raises(UsageError):
        grad_log_prob(mlp_new(NetSpec((49, 20, 1), "linear")), onehot(0), 0)


def test_value_grad_matches_finite_differences():
    beta = mlp_new(NetSpec((49, 20, 1), "linear", 6))
    x = onehot(30)
    fd = fd_grad(lambda p: tinynn.value(Network(beta.spec, p), x), beta.params)
    assert max_rel_err(tinynn.value_grad(beta, x), fd) < 1e-4


def test_sgd_step():
    net = mlp_new(NetSpec((49, 16, 3)))
    z = np.zeros_like(net.params)
    assert np.array_equal(sgd_step(net, z, 0.1).params, net.params)
    g = np.random.default_rng(0).normal(size=net.params.shape)
    assert np.array_equal(sgd_step(net, g, 0.0).params, net.params)
    g2 = np.random.default_rng(1).normal(size=net.params.shape)
    two = sgd_step(sgd_step(net, g, 0.5, "ascend"), g2, 0.5, "ascend")
    one = sgd_step(net, g + g2, 0.5, "ascend")
    assert np.allclose(two.params, one.params, atol=1e-14)
    assert np.allclose(sgd_step(net, g, 0.5, "descend").params, net.params - 0.5 * g)
    with pytest.raises(UsageError):
        sgd_step(net, g[:-1], 0.1)
    with pytest.raises(UsageError):
        sgd_step(net, g, 0.1, "sideways")


def test_last_layer_round_trip():
    net = mlp_new(NetSpec((49, 16, 3), init_seed=3))
    view = tinynn.last_layer(net)
    W, b = net.layers()[-1]
    assert np.array_equal(view, np.concatenate([W.ravel(), b]))
    other = tinynn.set_last_layer(mlp_new(NetSpec((49, 16, 3), init_seed=4)), view)
    assert np.array_equal(tinynn.last_layer(other), view)
    with pytest.raises(UsageError):
        tinynn.set_last_layer(net, view[:-1])


def test_snapshot_round_trip(tmp_path):
    net = mlp_new(NetSpec((49, 8, 8, 3), init_seed=12))
    tinynn.save(net, tmp_path / "a.txt", {"bundle": 3})
    back = tinynn.load(tmp_path / "a.txt")
    assert back == net
    tinynn.save(back, tmp_path / "b.txt", {"bundle": 3})
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()
    assert (tmp_path / "a.txt").read_text().count("# layer=") == 3


def test_snapshot_needs_layer_header():
    with pytest.raises(UsageError):
        tinynn.loads("# head=softmax\n0.5\n")
    with pytest.raises(UsageError):
        tinynn.loads("# layer=49x16\n# layer=8x3\n")


def test_network_shape_check():
    with pytest.raises(UsageError):
        Network(NetSpec((49, 16, 3)), np.zeros(5))
