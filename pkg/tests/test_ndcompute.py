import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from statehawk import ndcompute as nd
from statehawk.ndcompute import Adam, ParamStore, Tape, TrainingError


def _dense_store(W, b):
    return ParamStore([("l.W", np.asarray(W, float)), ("l.b", np.asarray(b, float))])


def test_dense_identity_and_scalar():
    p = _dense_store(np.eye(3), np.zeros(3))
    x = np.array([1.0, -2.0, 0.5])
    assert np.array_equal(nd.dense(Tape(), p, x, "l").value, x)
    p = _dense_store([[2.0]], [1.0])
    assert nd.dense(Tape(), p, np.array([3.0]), "l").value.tolist() == [7.0]


def test_dense_shape_mismatch():
    p = _dense_store(np.eye(3), np.zeros(3))
    with pytest.raises(ValueError):
        nd.dense(Tape(), p, np.ones(2), "l")


def test_dense_weight_gradient_is_outer_product(rng):
    p = _dense_store(rng.normal(size=(4, 3)), rng.normal(size=4))
    x = rng.normal(size=3)
    tape = Tape()
    g = tape.backward(nd.vsum(nd.dense(tape, p, x, "l")))
    assert np.allclose(g["l.W"], np.outer(np.ones(4), x))
    rep = nd.grad_check(lambda t: nd.vsum(nd.dense(t, p, x, "l")), p)
    assert rep.max_rel_error < 1e-6


def test_softmax_examples():
    assert np.allclose(nd.softmax_array(np.array([0.0, 0.0])), [0.5, 0.5])
    got = nd.softmax_array(np.array([math.log(0.9), math.log(0.1) + 0.2]))
    assert np.allclose(got, [0.88051, 0.11949], atol=1e-4)


@given(hnp.arrays(np.float64, st.integers(2, 6), elements=st.floats(-50, 50)), st.floats(-100, 100))
def test_softmax_distribution_and_shift_invariance(z, c):
    p = nd.softmax_array(z)
    assert np.all(p > 0) and abs(p.sum() - 1) < 1e-12
    assert np.allclose(nd.softmax_array(z + c), p, atol=1e-12)


def test_softmax_extreme_logits_stay_finite():
    p = nd.softmax_array(np.array([1000.0, -1000.0, 0.0]))
    assert np.all(np.isfinite(p)) and p[0] == pytest.approx(1.0)


def _gat_store(rng, F=4, heads=2, merge="average"):
    s = ParamStore()
    nd.add_gat(s, "g", F, heads, rng, merge)
    return s


def test_gat_identical_features_give_uniform_attention(rng):
    p = _gat_store(rng)
    h = np.tile(rng.normal(size=4), (5, 1))
    adj = (rng.random((5, 5)) < 0.5).astype(int)
    np.fill_diagonal(adj, 1)
    att = []
    nd.gat_layer(Tape(), p, h, adj, 2, "g", attention_out=att)
    for alpha in att:
        expect = adj / adj.sum(axis=1, keepdims=True)
        assert np.allclose(alpha, expect, atol=1e-12)


def test_gat_self_loop_only_node(rng):
    p = _gat_store(rng, heads=3)
    h = rng.normal(size=(3, 4))
    adj = np.array([[1, 0, 0], [1, 1, 1], [1, 1, 1]])
    att = []
    out = nd.gat_layer(Tape(), p, h, adj, 3, "g", attention_out=att).value
    assert all(a[0, 0] == pytest.approx(1.0) for a in att)
    msg = np.mean([p[f"g.W{d}"] @ h[0] for d in range(3)], axis=0)
    assert np.allclose(out[0], np.tanh(msg + h[0]))


@given(st.integers(1, 6), st.integers(0, 2**31))
def test_gat_attention_rows_sum_to_one(n, seed):
    rng = np.random.default_rng(seed)
    p = _gat_store(rng, F=3, heads=2)
    adj = (rng.random((n, n)) < 0.6).astype(int)
    np.fill_diagonal(adj, 1)
    att = []
    nd.gat_layer(Tape(), p, rng.normal(size=(n, 3)), adj, 2, "g", attention_out=att)
    for alpha in att:
        assert np.allclose(alpha.sum(axis=-1), 1.0, atol=1e-12)
        assert np.all(alpha[adj == 0] == 0.0)


@pytest.mark.parametrize("merge", ["average", "concat"])
def test_gat_gradient_on_three_nodes(rng, merge):
    p = _gat_store(rng, F=3, heads=2, merge=merge)
    h = rng.normal(size=(3, 3))
    adj = np.ones((3, 3))
    w = rng.normal(size=(3, 3))
    done = 0
    for _ in range(20):
        rep = nd.grad_check(lambda t: nd.vsum(nd.mul(nd.gat_layer(t, p, h, adj, 2, "g", merge), w)), p,
                            floor=1e-4)
        if not rep.skipped_kink:
            assert rep.max_rel_error < 1e-5
            done += 1
        h = rng.normal(size=(3, 3))
    assert done > 0


def test_gat_bad_adjacency(rng):
    p = _gat_store(rng)
    with pytest.raises(ValueError):
        nd.gat_layer(Tape(), p, np.ones((3, 4)), np.ones((2, 2)), 2, "g")
    with pytest.raises(ValueError):
        nd.gat_layer(Tape(), p, np.ones((2, 4)), np.array([[1, 0], [0, 0]]), 2, "g")


def test_adam_first_step_and_zero_grad():
    p = ParamStore([("w", np.array([0.5, 0.5]))])
    opt = Adam(p, lr=1e-3)
    opt.step({"w": np.array([1.0, 0.0])})
    delta = 0.5 - p["w"]
    assert 0.000999 <= delta[0] <= 0.001
    assert delta[1] == 0.0
    opt.step({"w": np.array([1.0, 0.0])})
    assert opt.step_count == 2 and p["w"][0] < 0.5 - 0.0019


def test_adam_rejects_nan():
    p = ParamStore([("w", np.zeros(2))])
    with pytest.raises(TrainingError):
        Adam(p).step({"w": np.array([np.nan, 0.0])})


def test_lazy_adam_skips_untouched_parameters():
    p = ParamStore([("a", np.ones(2)), ("b", np.ones(2))])
    opt = Adam(p, lazy=True)
    opt.step({"a": np.ones(2), "b": np.ones(2)})
    b_before, vb = p["b"].copy(), opt.v["b"].copy()
    opt.step({"a": np.ones(2), "b": np.zeros(2)})
    assert np.array_equal(p["b"], b_before) and np.array_equal(opt.v["b"], vb)


def test_grad_check_quadratic():
    p = ParamStore([("w", np.array([3.0]))])
    tape = Tape()
    out = nd.vsum(nd.square(tape.param(p, "w")))
    assert tape.backward(out)["w"][0] == pytest.approx(6.0)
    assert nd.grad_check(lambda t: nd.vsum(nd.square(t.param(p, "w"))), p).max_rel_error < 1e-8


def test_grad_check_mlp(rng):
    p = ParamStore()
    nd.add_dense(p, "a", 3, 5, rng)
    nd.add_dense(p, "b", 5, 2, rng)
    x = rng.normal(size=(4, 3))
    rep = nd.grad_check(lambda t: nd.vsum(nd.square(nd.mlp(t, p, x, ["a", "b"]))), p)
    assert not rep.skipped_kink and rep.max_rel_error < 1e-6


def test_grad_check_skips_relu_kink():
    p = ParamStore([("w", np.array([0.0, 1.0]))])
    rep = nd.grad_check(lambda t: nd.vsum(nd.relu(t.param(p, "w"))), p)
    assert rep.skipped_kink and rep.passed(1e-5)


@pytest.mark.parametrize("op,ref", [
    (nd.tanh, lambda x: 1 - np.tanh(x) ** 2),
    (nd.exp, np.exp),
    (lambda v: nd.log(nd.add(nd.square(v), 1.0)), lambda x: 2 * x / (x * x + 1)),
    (lambda v: nd.leaky_relu(v), lambda x: np.where(x > 0, 1.0, nd.LEAKY_SLOPE)),
])
def test_elementwise_derivatives(rng, op, ref):
    x = rng.normal(size=6) + 0.3
    p = ParamStore([("x", x)])
    tape = Tape()
    g = tape.backward(nd.vsum(op(tape.param(p, "x"))))["x"]
    assert np.allclose(g, ref(x))


def test_log_softmax_matches_softmax(rng):
    z = rng.normal(size=(3, 4))
    assert np.allclose(np.exp(nd.log_softmax(Tape().constant(z)).value), nd.softmax_array(z))


def test_gradients_accumulate_over_reuse():
    p = ParamStore([("w", np.array([2.0]))])
    tape = Tape()
    w = tape.param(p, "w")
    out = nd.vsum(nd.add(nd.mul(w, 3.0), nd.mul(w, w)))
    assert tape.backward(out)["w"][0] == pytest.approx(3.0 + 4.0)


def test_param_store_rules():
    s = ParamStore([("a", np.zeros((2, 3)))])
    with pytest.raises(ValueError):
        s.add("a", np.zeros(1))
    with pytest.raises(ValueError):
        s.add("b", np.array([np.inf]))
    with pytest.raises(ValueError):
        s["a"] = np.zeros(6)
    s.add("b", np.ones(2))
    assert s.names() == ["a", "b"] and s.size() == 8
    flat = np.arange(8.0)
    s.load_flat(flat)
    assert np.array_equal(s.flat(), flat)
    t = s.copy()
    t.lerp_(s.zeros_like(), 0.25)
    assert np.allclose(t.flat(), 0.75 * flat)


def test_checkpoint_roundtrip_bit_exact(tmp_path, rng):
    a = ParamStore([("w", rng.normal(size=(3, 2))), ("b", rng.normal(size=2)), ("s", np.array(1e-300))])
    b = ParamStore([("mu", np.array([np.pi]))])
    path = tmp_path / "x.ckpt"
    nd.save_checkpoint(path, {"a": a, "b": b}, {"epoch": 7})
    stores, meta = nd.load_checkpoint(path)
    assert meta == {"epoch": 7}
    for name, store in (("a", a), ("b", b)):
        assert stores[name].names() == store.names()
        for k, v in store.items():
            assert stores[name][k].tobytes() == v.tobytes()


def test_checkpoint_truncated(tmp_path, rng):
    path = tmp_path / "x.ckpt"
    nd.save_checkpoint(path, {"a": ParamStore([("w", rng.normal(size=4))])})
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(ValueError):
        nd.load_checkpoint(path)
    (tmp_path / "junk").write_bytes(b"hello")
    with pytest.raises(ValueError):
        nd.load_checkpoint(tmp_path / "junk")


def test_forward_is_deterministic(rng):
    p = _gat_store(rng)
    h, adj = rng.normal(size=(4, 4)), np.ones((4, 4))
    a = nd.gat_layer(Tape(), p, h, adj, 2, "g").value
    b = nd.gat_layer(Tape(enabled=False), p, h, adj, 2, "g").value
    assert np.array_equal(a, b)
