import numpy as np
import pytest

import oracles
from plangen.nlm import (
    NLM,
    Adam,
    NLMConfig,
    expand,
    load_into,
    permute_stack,
    permuted_linear,
    policy_head,
    read_checkpoint,
    reduce,
    save_checkpoint,
)
from plangen.nlm import autodiff as ad


def T(x, grad=False):
    return ad.parameter(np.asarray(x, float)) if grad else ad.Tensor(np.asarray(x, float))


# -- primitive ops -----------------------------------------------------------


def test_expand_shapes_and_values():
    x = np.arange(6.0).reshape(1, 3, 2)
    out = expand(T(x), 3).data
    assert out.shape == (1, 3, 3, 2)
    assert all(np.array_equal(out[0, i, j], x[0, i]) for i in range(3) for j in range(3))
    nullary = expand(T(np.array([[1.0, 2.0]])), 4).data
    assert nullary.shape == (1, 4, 2) and (nullary == [1.0, 2.0]).all()


def test_expand_gradient_is_n_times():
    x = T(np.random.default_rng(0).random((1, 3, 2)), grad=True)
    ad.sum(expand(x, 5)).backward()
    assert np.allclose(x.grad, 5.0)


def test_reduce_basic():
    assert reduce(T([[[0.0], [1.0], [0.0]]]), "exists").data.item() == 1.0
    assert reduce(T([[[1.0], [1.0], [0.0]]]), "forall").data.item() == 0.0


def test_reduce_exclude_self():
    diag = np.eye(2).reshape(1, 2, 2, 1)
    assert (reduce(T(diag), "exists", exclude_self=True).data == 0).all()
    assert (reduce(T(diag), "exists", exclude_self=False).data == 1).all()
    off = (1 - np.eye(2)).reshape(1, 2, 2, 1)
    assert (reduce(T(off), "forall", exclude_self=True).data == 1).all()


def test_reduce_gradient_routes_to_argmax():
    x = T([[[0.2], [0.9], [0.5]]], grad=True)
    ad.sum(reduce(x, "exists")).backward()
    assert x.grad.ravel().tolist() == [0.0, 1.0, 0.0]


def test_permute_stack():
    x = np.random.default_rng(1).random((1, 3, 3, 2))
    out = permute_stack(T(x)).data
    assert out.shape == (1, 3, 3, 4)
    assert np.array_equal(out[..., 2:], x.transpose(0, 2, 1, 3))
    unary = np.ones((1, 3, 2))
    assert np.array_equal(permute_stack(T(unary)).data, unary)
    assert permute_stack(T(np.ones((1, 2, 2, 2, 3)))).shape[-1] == 18


@pytest.mark.parametrize("r", [1, 2, 3])
def test_permuted_linear_matches_explicit(r):
    rng = np.random.default_rng(r)
    x = T(rng.random((2,) + (3,) * r + (4,)))
    w = T(rng.standard_normal((4 * [1, 1, 2, 6][r], 5)))
    b = T(rng.standard_normal(5))
    fused = permuted_linear(x, w, b).data
    explicit = ad.add(ad.matmul(permute_stack(x), w), b).data
    assert np.allclose(fused, explicit, atol=1e-13)


def test_sum_and_sigmoid_gradients():
    p = T(np.random.default_rng(0).random((3, 4)), grad=True)
    ad.sum(p).backward()
    assert (p.grad == 1).all()
    z = T([0.0], grad=True)
    ad.sum(ad.sigmoid(z)).backward()
    assert z.grad[0] == pytest.approx(0.25)


# -- full network ------------------------------------------------------------


def test_single_layer_identity():
    cfg = NLMConfig(depth=1, breadth=1, hidden_channels=1, io_residual=False)
    net = NLM(cfg, (0, 1), head_arities=(1,))
    net.params["layer0.arity1.w0"].data[:] = 1.0
    x = np.random.default_rng(0).random((1, 4, 1))
    out = net.body([np.zeros((1, 0)), x])
    assert np.allclose(out[1].data, 1 / (1 + np.exp(-x)))


def test_zero_input_zero_bias_gives_half():
    net = NLM(NLMConfig(depth=1, breadth=2, hidden_channels=3), (2, 2, 2))
    out = net.body([np.zeros((1, 2)), np.zeros((1, 3, 2)), np.zeros((1, 3, 3, 2))])
    assert all(np.allclose(o.data, 0.5) for o in out)


def test_shape_errors():
    net = NLM(NLMConfig(depth=1, breadth=1), (1, 1))
    with pytest.raises(ValueError):
        net.body([np.zeros((1, 1)), np.zeros((1, 3, 2))])
    with pytest.raises(ValueError):
        NLM(NLMConfig(breadth=1), (1, 1, 1))
    with pytest.raises(ValueError):
        NLM(NLMConfig(breadth=1), (1, 1), head_arities=(2,))


def test_init_params_seeded():
    a = NLM(NLMConfig(), (2, 2, 2, 2), seed=3)
    b = NLM(NLMConfig(), (2, 2, 2, 2), seed=3)
    c = NLM(NLMConfig(), (2, 2, 2, 2), seed=4)
    assert np.array_equal(a.get_flat(), b.get_flat())
    assert not np.array_equal(a.get_flat(), c.get_flat())


def test_initial_logit_spread(bw):
    from plangen.baseline import random_episode
    from plangen.encode import encode_init, init_channel_counts, stack
    from plangen.genmdp import GenConfig, GenerationMDP

    mdp = GenerationMDP(bw, "builtin:blocksworld", GenConfig(max_init_atoms=8, goal_spec=("on(block, block)",)))
    net = NLM(NLMConfig(), init_channel_counts(mdp), head_arities=[p.arity for p in bw.predicates], seed=0)
    rng = np.random.default_rng(0)
    stds = []
    for _ in range(20):
        gs = mdp.new_episode()
        for _ in range(int(rng.integers(0, 8))):
            legal = mdp.legal_atom_actions(gs)
            gs = mdp.step_init(gs, legal[int(rng.integers(len(legal)))])
        with ad.no_grad():
            stds.append(net.logits(stack([encode_init(gs, mdp)])).data.std())
    assert max(stds) < 2.0
    assert random_episode(mdp, rng).phase is not None


def test_value_head():
    net = NLM(NLMConfig(depth=2, breadth=2, hidden_channels=4), (1, 2, 1), value_head=True, seed=1)
    rng = np.random.default_rng(2)
    x = [rng.random((1, 1)), rng.random((1, 4, 2)), rng.random((1, 4, 4, 1))]
    v = net.value(x).data
    assert v.shape == (1,) and np.isfinite(v).all()
    perm = rng.permutation(4)
    px = [x[0], x[1][:, perm], x[2][:, perm][:, :, perm]]
    assert net.value(px).data[0] == pytest.approx(v[0], abs=1e-12)
    for p in net.params.values():
        p.data[:] = 0
    assert net.value(x).data[0] == 0


def test_policy_logit_layout():
    net = NLM(NLMConfig(depth=1, breadth=2, hidden_channels=2), (1, 1, 1), head_arities=(0, 1, 2, 1))
    n = 3
    x = [np.zeros((2, 1)), np.zeros((2, n, 1)), np.zeros((2, n, n, 1))]
    assert net.logits(x).shape == (2, 1 + n + n * n + n + 1)


def test_policy_head_examples():
    logits = T(np.zeros((1, 5)))
    out = policy_head(logits, np.array([True, True, False, True, False]))
    assert np.allclose(out.masked_probs, [[1 / 3, 1 / 3, 0, 1 / 3, 0]])
    one = policy_head(T(np.random.default_rng(0).standard_normal((1, 4))), np.array([False, False, True, False]))
    assert one.masked_probs[0].tolist() == [0, 0, 1.0, 0]
    big = policy_head(T([[1e3, -1e3, 5.0]]), np.array([False, True, True]))
    assert big.masked_probs[0, 0] == 0 and big.masked_probs.sum() == pytest.approx(1)
    with pytest.raises(ValueError):
        policy_head(logits, np.zeros(5, bool))


def test_gradients_small_network():
    cfg = NLMConfig(depth=2, breadth=2, hidden_channels=3)
    net = NLM(cfg, (1, 2, 2), value_head=True, seed=2)
    rng = np.random.default_rng(7)
    x = [rng.random((2, 1)), rng.random((2, 3, 2)), rng.random((2, 3, 3, 2))]

    def loss():
        return ad.sum(ad.square(ad.add(net.value(x), -1.0)))

    theta = net.get_flat()
    net.zero_grad()
    loss().backward()
    grad = np.concatenate([(np.zeros_like(p.data) if p.grad is None else p.grad).ravel() for p in net.params.values()])

    def f(t):
        net.set_flat(t)
        with ad.no_grad():
            return float(loss().data)

    for _ in range(10):
        d = rng.standard_normal(theta.shape)
        assert oracles.relative_error(grad @ d, oracles.central_difference(f, theta, d)) < 1e-5
    net.set_flat(theta)


# -- checkpoints and optimizer -----------------------------------------------


def test_checkpoint_round_trip(tmp_path):
    a = NLM(NLMConfig(depth=2), (1, 1, 1, 1), head_arities=(1, 2), seed=1)
    b = NLM(NLMConfig(depth=2), (1, 1, 1, 1), head_arities=(1, 2), seed=2)
    path = tmp_path / "ck.npz"
    save_checkpoint(path, {"p": a}, meta={"iteration": 7}, extra_arrays={"x": np.arange(3.0)})
    header, arrays = read_checkpoint(path)
    assert header["meta"]["iteration"] == 7 and arrays["extra/x"].tolist() == [0, 1, 2]
    load_into({"p": b}, header, arrays)
    assert np.array_equal(a.get_flat(), b.get_flat())
    wrong = NLM(NLMConfig(depth=3), (1, 1, 1, 1), head_arities=(1, 2))
    with pytest.raises(ValueError):
        load_into({"p": wrong}, header, arrays)


def test_adam_first_step_is_lr_sign():
    p = ad.parameter(np.array([1.0, -2.0, 3.0]))
    opt = Adam({"p": p}, lr=0.1)
    p.grad = np.array([0.5, -4.0, 0.0])
    opt.step()
    assert np.allclose(p.data, [0.9, -1.9, 3.0])


def test_adam_state_round_trip():
    p = ad.parameter(np.zeros(2))
    opt = Adam({"p": p}, lr=0.01)
    for g in ([1.0, 2.0], [0.5, -1.0]):
        p.grad = np.array(g)
        opt.step()
    state = opt.state("adam")
    q = ad.parameter(p.data.copy())
    opt2 = Adam({"p": q}, lr=0.01)
    opt2.load(state, "adam")
    p.grad = q.grad = np.array([0.3, 0.3])
    opt.step()
    opt2.step()
    assert np.array_equal(p.data, q.data)
