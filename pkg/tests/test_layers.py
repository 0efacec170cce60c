"""Layer primitives against naive whole-utterance oracles.

Every streaming step, run frame-by-frame from a cold state, must equal
an independently coded batch evaluation of the same layer; feedforward
layers must be causal; parameter and MAC counts match closed forms.
"""

import numpy as np
import pytest

from taer.graph import path_lookback, run_frame
from taer.layers import LayerError, LayerSpec, layer_step
from taer.zoo import _stcn


# -- naive references ---------------------------------------------------

def naive_conv2d_time(w, b, xs, stride):
    """Causal conv over (T, C, F) with zero history, freq valid."""
    c_out, c_in, kt, kf = w.shape
    t_len, _, f_in = xs.shape
    f_out = (f_in - kf) // stride + 1
    out = np.zeros((t_len, c_out, f_out))
    for t in range(t_len):
        for tau in range(kt):
            ti = t - (kt - 1 - tau)
            if ti < 0:
                continue
            for fo in range(f_out):
                seg = xs[ti][:, fo * stride : fo * stride + kf]
                out[t, :, fo] += np.einsum("oik,ik->o", w[:, :, tau, :], seg)
        out[t] += b[:, None]
    return out


def naive_deconv2d_time(w, b, xs, stride, f_target):
    """Causal-in-time, transposed-in-frequency conv with zero history."""
    c_out, c_in, kt, kf = w.shape
    t_len, _, f_in = xs.shape
    out = np.zeros((t_len, c_out, f_target))
    for t in range(t_len):
        for tau in range(kt):
            ti = t - (kt - 1 - tau)
            if ti < 0:
                continue
            for fi in range(f_in):
                for j in range(kf):
                    out[t, :, fi * stride + j] += w[:, :, tau, j] @ xs[ti][:, fi]
        out[t] += b[:, None]
    return out


def naive_conv1d(w, b, xs, dilation):
    c_out, c_in, k = w.shape
    t_len = xs.shape[0]
    out = np.zeros((t_len, c_out))
    for t in range(t_len):
        for i in range(k):
            ti = t - (k - 1 - i) * dilation
            if ti >= 0:
                out[t] += w[:, :, i] @ xs[ti]
        out[t] += b
    return out


def naive_cln(xs, gain, bias, eps):
    """Cumulative layer norm over all elements of frames 1..t."""
    out = np.zeros_like(xs)
    count = s = ss = 0.0
    for t in range(xs.shape[0]):
        x = xs[t]
        count += x.size
        s += x.sum()
        ss += (x * x).sum()
        mean = s / count
        var = max(ss / count - mean * mean, 0.0)
        norm = (x - mean) / np.sqrt(var + eps)
        g = gain[:, None] if x.ndim == 2 else gain
        bb = bias[:, None] if x.ndim == 2 else bias
        out[t] = norm * g + bb
    return out


def naive_gru(w, u, b, xs):
    """Plain GRU with a single combined bias per gate stack."""
    h = np.zeros(u.shape[1])
    out = []
    for x in xs:
        zx, rx, nx = np.split(w @ x + b, 3)
        zh, rh, nh = np.split(u @ h, 3)
        z = 1.0 / (1.0 + np.exp(-(zx + zh)))
        r = 1.0 / (1.0 + np.exp(-(rx + rh)))
        n = np.tanh(nx + r * nh)
        h = (1.0 - z) * n + z * h
        out.append(h.copy())
    return np.stack(out)


def stream(spec, weights, xs):
    state = spec.init_state()
    return np.stack([layer_step(spec, weights, x, state) for x in xs])


# -- convolutions -------------------------------------------------------

class TestConv2d:
    def test_streaming_matches_naive(self, rng):
        spec = LayerSpec("conv2d", "c", in_ch=3, out_ch=5, kernel=(2, 3), stride=2,
                         in_freq=19, out_freq=9)
        w = {"c.w": rng.normal(size=(5, 3, 2, 3)), "c.b": rng.normal(size=5)}
        xs = rng.normal(size=(7, 3, 19))
        got = stream(spec, w, xs)
        np.testing.assert_allclose(got, naive_conv2d_time(w["c.w"], w["c.b"], xs, 2),
                                   atol=1e-12)

    def test_causality(self, rng):
        spec = LayerSpec("conv2d", "c", in_ch=2, out_ch=2, kernel=(2, 3), stride=2,
                         in_freq=9, out_freq=4)
        w = {"c.w": rng.normal(size=(2, 2, 2, 3)), "c.b": rng.normal(size=2)}
        xs = rng.normal(size=(6, 2, 9))
        base = stream(spec, w, xs)
        xs2 = xs.copy()
        xs2[3] += 1.0
        pert = stream(spec, w, xs2)
        assert np.array_equal(base[:3], pert[:3])
        assert not np.array_equal(base[3], pert[3])

    def test_deconv_matches_naive_with_output_padding(self, rng):
        # 39 -> 80 requires one frame of frequency output padding
        spec = LayerSpec("deconv2d", "d", in_ch=4, out_ch=3, kernel=(2, 3), stride=2,
                         in_freq=39, out_freq=80)
        w = {"d.w": rng.normal(size=(3, 4, 2, 3)), "d.b": rng.normal(size=3)}
        xs = rng.normal(size=(5, 4, 39))
        got = stream(spec, w, xs)
        np.testing.assert_allclose(
            got, naive_deconv2d_time(w["d.w"], w["d.b"], xs, 2, 80), atol=1e-12)

    def test_deconv_unreachable_out_freq_rejected(self, rng):
        spec = LayerSpec("deconv2d", "d", in_ch=1, out_ch=1, kernel=(1, 3), stride=2,
                         in_freq=10, out_freq=30)
        w = {"d.w": np.zeros((1, 1, 1, 3)), "d.b": np.zeros(1)}
        with pytest.raises(LayerError, match="d"):
            layer_step(spec, w, np.zeros((1, 10)), spec.init_state())


class TestGlu2d:
    def test_zero_weights_give_zero(self, rng):
        spec = LayerSpec("glu2d", "g", in_ch=2, out_ch=4, kernel=(1, 3), stride=2,
                         in_freq=161, out_freq=80)
        w = {k: np.zeros(s) for k, s in spec.weight_shapes().items()}
        y = layer_step(spec, w, rng.normal(size=(2, 161)), spec.init_state())
        assert y.shape == (4, 80)
        assert np.all(y == 0)

    def test_freq_shape_formula(self):
        chain = [161]
        for _ in range(5):
            chain.append((chain[-1] - 3) // 2 + 1)
        assert chain == [161, 80, 39, 19, 9, 4]

    def test_saturated_gate_identity(self, rng):
        """Delta linear kernel + gate bias +20 passes the input through."""
        spec = LayerSpec("glu2d", "g", in_ch=3, out_ch=3, kernel=(1, 1), stride=1,
                         in_freq=40, out_freq=40)
        w = {k: np.zeros(s) for k, s in spec.weight_shapes().items()}
        w["g.a.w"] = np.eye(3)[:, :, None, None]
        w["g.b.b"] = np.full(3, 20.0)
        x = rng.normal(size=(3, 40))
        y = layer_step(spec, w, x, spec.init_state())
        np.testing.assert_allclose(y, x, atol=1e-6)

    def test_dim_mismatch_names_layer(self, rng):
        spec = LayerSpec("glu2d", "badlayer", in_ch=2, out_ch=4, kernel=(1, 3),
                         stride=2, in_freq=161, out_freq=80)
        w = {k: np.zeros(s) for k, s in spec.weight_shapes().items()}
        with pytest.raises(LayerError, match="badlayer"):
            layer_step(spec, w, np.zeros((3, 161)), spec.init_state())


class TestConv1d:
    def test_streaming_matches_naive(self, rng):
        spec = LayerSpec("conv1d", "c", in_ch=6, out_ch=4, kernel=(5, 1), dilation=3)
        w = {"c.w": rng.normal(size=(4, 6, 5)), "c.b": rng.normal(size=4)}
        xs = rng.normal(size=(30, 6))
        np.testing.assert_allclose(stream(spec, w, xs),
                                   naive_conv1d(w["c.w"], w["c.b"], xs, 3), atol=1e-12)

    def test_lookback(self):
        spec = LayerSpec("conv1d", "c", in_ch=1, out_ch=1, kernel=(5, 1), dilation=9)
        assert spec.lookback() == 36


class TestCln:
    def test_constant_input_is_zero(self):
        spec = LayerSpec("cln", "n", in_ch=4, in_freq=8)
        w = {"n.gain": np.ones(4), "n.bias": np.zeros(4)}
        xs = np.full((6, 4, 8), 3.25)
        assert np.max(np.abs(stream(spec, w, xs))) < 1e-3  # eps-limited

    def test_matches_bruteforce_cumulative_stats(self, rng):
        spec = LayerSpec("cln", "n", in_ch=5, in_freq=7)
        w = {"n.gain": rng.normal(size=5), "n.bias": rng.normal(size=5)}
        xs = rng.normal(2.0, 3.0, size=(9, 5, 7))
        got = stream(spec, w, xs)
        ref = naive_cln(xs, w["n.gain"], w["n.bias"], spec.eps)
        np.testing.assert_allclose(got, ref, atol=1e-6)

    def test_zero_input_zero_bias(self):
        spec = LayerSpec("cln", "n", in_ch=3)
        w = {"n.gain": np.ones(3), "n.bias": np.zeros(3)}
        assert np.all(stream(spec, w, np.zeros((4, 3))) == 0)


class TestStcm:
    def _weights(self, ops, rng, zero=False):
        w = {}
        for op in ops:
            if isinstance(op, LayerSpec):
                for k, s in op.weight_shapes().items():
                    if zero or k.endswith(".b") or k.endswith(".bias"):
                        w[k] = np.zeros(s)
                    elif k.endswith(".gain"):
                        w[k] = np.ones(s)
                    elif k.endswith(".slope"):
                        w[k] = np.full(s, 0.25)
                    else:
                        w[k] = rng.normal(0, 0.2, size=s)
        return w

    def test_zero_weights_residual_identity(self, rng):
        from taer.zoo import _stcm
        ops = _stcm("m", dilation=2)
        w = self._weights(ops, rng, zero=True)
        state = {op.name: op.init_state() for op in ops if isinstance(op, LayerSpec)}
        x = rng.normal(size=256)
        y = run_frame(ops, w, x, state)
        np.testing.assert_array_equal(y, x)

    @pytest.mark.parametrize("dilation", [1, 2, 5, 9])
    def test_perturbation_window_edge(self, rng, dilation):
        """Kernel 5, dilation d reaches exactly 4d frames back."""
        from taer.zoo import _stcm
        ops = _stcm("m", dilation=dilation)
        specs = [op for op in ops if isinstance(op, LayerSpec)]
        w = self._weights(specs, rng)
        t_len = 4 * dilation + 4
        xs = rng.normal(size=(t_len, 256))

        def drive(seq):
            state = {sp.name: sp.init_state() for sp in specs}
            outs = []
            for x in seq:
                for sp in specs:  # frame-local norm stats: isolate conv taps
                    if sp.kind == "cln":
                        state[sp.name][:] = [0.0, 0.0, 0.0]
                outs.append(run_frame(ops, w, x, state))
            return np.stack(outs)

        base = drive(xs)
        t = t_len - 1
        for delta, expect in ((4 * dilation, True), (4 * dilation + 1, False)):
            xs2 = xs.copy()
            xs2[t - delta] += 0.5
            pert = drive(xs2)
            assert (not np.array_equal(base[t], pert[t])) == expect

    def test_group_lookback_is_68(self):
        ops = [op for op in _stcn("g", dim=256)]
        per_group = path_lookback(ops) // 2
        assert per_group == 4 * (1 + 2 + 5 + 9) == 68


class TestGru:
    def test_single_group_matches_plain_reference(self, rng):
        spec = LayerSpec("gru_grouped", "g", in_ch=10, out_ch=8, groups=1)
        w = {"g.g0.w": rng.normal(size=(24, 10)), "g.g0.u": rng.normal(size=(24, 8)),
             "g.g0.b": rng.normal(size=24)}
        xs = rng.normal(size=(12, 10))
        got = stream(spec, w, xs)
        ref = naive_gru(w["g.g0.w"], w["g.g0.u"], w["g.g0.b"], xs)
        np.testing.assert_allclose(got, ref, atol=1e-12)

    def test_zero_weights_halve_hidden(self):
        """z=sigmoid(0)=0.5 and candidate tanh(0)=0, so h' = 0.5*h."""
        spec = LayerSpec("gru_grouped", "g", in_ch=4, out_ch=4, groups=2)
        w = {k: np.zeros(s) for k, s in spec.weight_shapes().items()}
        state = spec.init_state()
        state[:] = np.array([1.0, -2.0, 4.0, 8.0])
        y = layer_step(spec, w, np.zeros(4), state)
        np.testing.assert_allclose(y, [0.5, -1.0, 2.0, 4.0], atol=1e-15)

    def test_block_diagonal_embedding_matches_grouped(self, rng):
        """g=2 grouped cell == dense cell with block-diagonal weights."""
        ig, hg = 3, 4
        spec2 = LayerSpec("gru_grouped", "g", in_ch=2 * ig, out_ch=2 * hg, groups=2)
        w2 = {k: rng.normal(size=s) for k, s in spec2.weight_shapes().items()}

        spec1 = LayerSpec("gru_grouped", "d", in_ch=2 * ig, out_ch=2 * hg, groups=1)
        w_d = np.zeros((3 * 2 * hg, 2 * ig))
        u_d = np.zeros((3 * 2 * hg, 2 * hg))
        b_d = np.zeros(3 * 2 * hg)
        for gate in range(3):
            for gi in range(2):
                rows = slice(gate * 2 * hg + gi * hg, gate * 2 * hg + (gi + 1) * hg)
                w_d[rows, gi * ig : (gi + 1) * ig] = \
                    w2[f"g.g{gi}.w"][gate * hg : (gate + 1) * hg]
                u_d[rows, gi * hg : (gi + 1) * hg] = \
                    w2[f"g.g{gi}.u"][gate * hg : (gate + 1) * hg]
                b_d[rows] = w2[f"g.g{gi}.b"][gate * hg : (gate + 1) * hg]
        w1 = {"d.g0.w": w_d, "d.g0.u": u_d, "d.g0.b": b_d}

        xs = rng.normal(size=(10, 2 * ig))
        grouped = stream(spec2, w2, xs)
        # dense output is group-0 rows then group-1 rows per gate layout;
        # grouped output is [h_g0, h_g1] -- identical orderings here
        dense = stream(spec1, w1, xs)
        np.testing.assert_allclose(grouped, dense, atol=1e-12)

    def test_groups_must_divide(self):
        with pytest.raises(LayerError):
            LayerSpec("gru_grouped", "g", in_ch=10, out_ch=9, groups=2)


class TestLstm:
    def test_zero_weights_closed_form(self):
        """All-zero gates: c' = 0.5*c, h' = 0.5*tanh(0.5*c)."""
        spec = LayerSpec("lstm", "l", in_ch=3, out_ch=3)
        w = {k: np.zeros(s) for k, s in spec.weight_shapes().items()}
        state = spec.init_state()
        state[1][:] = np.array([1.0, 2.0, -1.0])
        y = layer_step(spec, w, np.zeros(3), state)
        np.testing.assert_allclose(y, 0.5 * np.tanh(0.5 * np.array([1.0, 2.0, -1.0])),
                                   atol=1e-15)
        np.testing.assert_allclose(state[1], [0.5, 1.0, -0.5], atol=1e-15)

    def test_state_carries_across_frames(self, rng):
        spec = LayerSpec("lstm", "l", in_ch=4, out_ch=5)
        w = {k: rng.normal(0, 0.4, size=s) for k, s in spec.weight_shapes().items()}
        xs = rng.normal(size=(6, 4))
        full = stream(spec, w, xs)
        state = spec.init_state()
        chunked = [layer_step(spec, w, x, state) for x in xs[:3]]
        chunked += [layer_step(spec, w, x, state) for x in xs[3:]]
        np.testing.assert_array_equal(full, np.stack(chunked))


class TestActivations:
    def test_prelu_definition(self, rng):
        spec = LayerSpec("prelu", "p", in_ch=3, in_freq=5)
        w = {"p.slope": np.array([0.25, 0.5, 2.0])}
        x = rng.normal(size=(3, 5))
        y = layer_step(spec, w, x, None)
        pos = x >= 0
        assert np.array_equal(y[pos], x[pos])
        np.testing.assert_allclose(y[~pos], (w["p.slope"][:, None] * x)[~pos])

    def test_sigmoid_tanh(self):
        s = LayerSpec("sigmoid", "s", in_ch=4)
        t = LayerSpec("tanh", "t", in_ch=4)
        x = np.array([-50.0, 0.0, 1.0, 50.0])
        np.testing.assert_allclose(layer_step(s, {}, x, None),
                                   [1.9e-22, 0.5, 1 / (1 + np.exp(-1)), 1.0],
                                   rtol=1e-6, atol=1e-21)
        np.testing.assert_allclose(layer_step(t, {}, x, None), np.tanh(x), atol=1e-15)


class TestCounting:
    def test_linear_closed_form(self):
        spec = LayerSpec("linear", "l", in_ch=256, out_ch=161)
        assert spec.param_count() == 256 * 161 + 161 == 41377

    def test_gru_closed_form(self):
        spec = LayerSpec("gru_grouped", "g", in_ch=128, out_ch=128, groups=1)
        assert spec.param_count() == 3 * (128 * 128 + 128 * 128 + 128) == 98688

    def test_conv1d_macs_closed_form(self):
        spec = LayerSpec("conv1d", "c", in_ch=64, out_ch=64, kernel=(5, 1), dilation=2)
        assert spec.macs_per_frame() == 64 * 64 * 5 == 20480

    def test_lstm_params(self):
        spec = LayerSpec("lstm", "l", in_ch=256, out_ch=256)
        assert spec.param_count() == 4 * (256 * 256 + 256 * 256 + 256) == 525312
