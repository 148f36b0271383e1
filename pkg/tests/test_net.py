import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ccal import cca, net
from ccal.errors import ContractError, FormatError, PoisonedGradientError, StaleTapeError
from conftest import central_diff, normwise_err


def small_tower(widths=(5, 7, 6, 3), seed=0):
    return net.Tower.init(net.TowerSpec(widths), seed)


class TestElu:
    def test_values(self):
        np.testing.assert_allclose(net.elu(np.array([-1.0, 2.0, 0.0])), [np.exp(-1) - 1, 2.0, 0.0])
        assert net.elu(np.array([-1.0]))[0] == pytest.approx(-0.6321, abs=1e-4)

    def test_grad_fd(self):
        x = np.linspace(-3, 3, 13) + 0.01
        h = 1e-6
        np.testing.assert_allclose(net.elu_grad(x), (net.elu(x + h) - net.elu(x - h)) / (2 * h), atol=1e-8)


class TestTowerSpec:
    def test_default_activations(self):
        s = net.TowerSpec((4, 8, 8, 2))
        assert s.activations == ("elu", "elu", "linear")
        assert s.output_width == 2

    def test_invalid(self):
        with pytest.raises(ContractError):
            net.TowerSpec((4,))
        with pytest.raises(ContractError):
            net.TowerSpec((4, 2), ("relu",))


class TestForward:
    def test_zero_weights(self, rng):
        t = small_tower()
        for p in t.params():
            p[...] = 0.0
        out, _ = net.mlp_forward(t, rng.standard_normal((4, 5)))
        assert not out.any()

    def test_single_linear_layer(self, rng):
        t = net.Tower.init(net.TowerSpec((5, 3)), 1)
        t.biases[0][:] = rng.standard_normal(3)
        A = rng.standard_normal((6, 5))
        np.testing.assert_array_equal(net.mlp_forward(t, A)[0], A @ t.weights[0] + t.biases[0])

    def test_width_mismatch(self, rng):
        with pytest.raises(ContractError):
            net.mlp_forward(small_tower(), rng.standard_normal((4, 4)))

    def test_glorot_bounds_and_seeding(self):
        a, b = small_tower(seed=3), small_tower(seed=3)
        for Wa, Wb in zip(a.weights, b.weights):
            assert Wa.tobytes() == Wb.tobytes()
            lim = np.sqrt(6.0 / sum(Wa.shape))
            assert np.abs(Wa).max() <= lim
        assert all(not bb.any() for bb in a.biases)
        assert small_tower(seed=4).weights[0].tobytes() != a.weights[0].tobytes()


class TestBackward:
    def test_zero_adjoint(self, rng):
        t = small_tower()
        out, tape = net.mlp_forward(t, rng.standard_normal((4, 5)))
        grads, gin = net.mlp_backward(tape, np.zeros_like(out))
        assert all(not g.any() for g in grads) and not gin.any()

    def test_linear_layer_weight_grad(self, rng):
        t = net.Tower.init(net.TowerSpec((5, 3)), 1)
        A = rng.standard_normal((6, 5))
        G = rng.standard_normal((6, 3))
        grads, _ = net.mlp_backward(net.mlp_forward(t, A)[1], G)
        np.testing.assert_array_equal(grads[0], A.T @ G)
        np.testing.assert_array_equal(grads[1], G.sum(axis=0))

    def test_fd(self, rng):
        t = small_tower()
        for b in t.biases:
            b[:] = rng.standard_normal(b.shape) * 0.1
        A = rng.standard_normal((9, 5))
        W = rng.standard_normal((9, 3))
        grads, gin = net.mlp_backward(net.mlp_forward(t, A)[1], W)
        num = central_diff(lambda: np.sum(W * net.mlp_forward(t, A)[0]), t.params() + [A])
        assert normwise_err(grads + [gin], num) < 1e-5

    def test_stale_tape(self, rng):
        t = small_tower()
        out, tape = net.mlp_forward(t, rng.standard_normal((4, 5)))
        t.version += 1
        with pytest.raises(StaleTapeError):
            net.mlp_backward(tape, out)


class TestAdam:
    def test_zero_grads_no_decay(self, rng):
        params = [rng.standard_normal((3, 2)), rng.standard_normal(2)]
        before = [p.copy() for p in params]
        adam = net.AdamState(lr=0.1)
        net.adam_step(params, [np.zeros((3, 2)), np.zeros(2)], adam, 0.0)
        assert adam.step == 1
        for p, q in zip(params, before):
            assert p.tobytes() == q.tobytes()

    def test_first_step_magnitude(self, rng):
        p = rng.standard_normal(20)
        g = rng.standard_normal(20)
        p0 = p.copy()
        net.adam_step([p], [g], net.AdamState(lr=0.01), 0.0)
        # at t=1 the bias-corrected moments are g and g**2
        np.testing.assert_allclose(p, p0 - 0.01 * g / (np.abs(g) + 1e-8), rtol=1e-12)

    def test_recurrence_against_hand_loop(self, rng):
        p = rng.standard_normal(5)
        q = p.copy()
        adam = net.AdamState(lr=0.05)
        m = v = np.zeros(5)
        for t in range(1, 6):
            g = rng.standard_normal(5)
            net.adam_step([p], [g.copy()], adam, 1e-2)
            g = g + 1e-2 * q
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            q = q - 0.05 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        np.testing.assert_allclose(p, q, rtol=1e-12)

    def test_pure_decay_shrinks(self):
        p = np.array([1.0, -2.0, 3.0])
        adam = net.AdamState(lr=0.01)
        for _ in range(10):
            net.adam_step([p], [np.zeros(3)], adam, 0.1)
        assert np.all(np.abs(p) < [1.0, 2.0, 3.0])
        assert np.all(np.sign(p) == [1, -1, 1])

    def test_nan_poisons(self):
        with pytest.raises(PoisonedGradientError):
            net.adam_step([np.zeros(2)], [np.array([0.0, np.nan])], net.AdamState())


def make_model(head="ccal-rank", seed=0):
    return net.DualNet.init(net.TowerSpec((5, 8, 3)), net.TowerSpec((4, 8, 3)), head, seed)


class TestDualNet:
    def test_bad_head_and_widths(self):
        with pytest.raises(ContractError):
            make_model("bogus")
        with pytest.raises(ContractError):
            net.DualNet.init(net.TowerSpec((5, 3)), net.TowerSpec((5, 2)), "tno")

    def test_cca_head_needs_state(self, rng):
        m = make_model("tno")
        with pytest.raises(ContractError):
            m.embed_x(rng.standard_normal((3, 5)))
        out = make_model("learned-rank").embed_x(rng.standard_normal((3, 5)))
        assert out.shape == (3, 3)

    def test_towers_are_seeded_independently(self):
        m = make_model()
        assert m.tower_f.weights[0][:4].tobytes() != m.tower_g.weights[0].tobytes()


class TestModelFile:
    @pytest.mark.parametrize("with_state", [False, True])
    def test_round_trip(self, rng, with_state, tmp_path):
        m = make_model()
        m.config = {"lr": 0.001, "reg": 0.001}
        if with_state:
            x, y = m.towers(rng.standard_normal((30, 5)), rng.standard_normal((30, 4)))
            m.cca_state = cca.cca_fit(x, y, 1e-3, 3)
        path = tmp_path / "m.ccal"
        net.save_model(m, path)
        back = net.load_model(path)
        assert net.model_to_bytes(back) == path.read_bytes()
        for p, q in zip(m.params(), back.params()):
            assert p.tobytes() == q.tobytes()
        assert back.head == m.head and back.config == m.config
        if with_state:
            assert back.cca_state.equals(m.cca_state, atol=0.0)
        else:
            assert back.cca_state is None

    def test_corruption(self):
        blob = net.model_to_bytes(make_model())
        with pytest.raises(FormatError) as exc:
            net.model_from_bytes(b"XXXXXXXX" + blob[8:])
        assert exc.value.offset == 0
        with pytest.raises(FormatError):
            net.model_from_bytes(blob[:40])
        with pytest.raises(FormatError):
            net.model_from_bytes(blob + b"\0")

    @given(st.integers(0, 400))
    @settings(max_examples=30, deadline=None)
    def test_any_truncation_is_a_format_error(self, cut):
        blob = net.model_to_bytes(make_model())
        cut = min(cut, len(blob) - 1)
        with pytest.raises(FormatError):
            net.model_from_bytes(blob[:cut])
