"""Order recursion, superimposition, diagnostics, streaming equality."""

import math

import numpy as np
import pytest

from taer import (
    ComplexSpectrogram, EngineError, EngineSession, forward, superimpose,
    approximation_mse, remaining_term_mse,
)
from taer.engine import dump_orders, read_order_dump
from taer.weights import random_archive


def random_spec(rng, channels, frames, bins=161, scale=1.0):
    return scale * (rng.normal(size=(channels, frames, bins))
                    + 1j * rng.normal(size=(channels, frames, bins)))


class TestZerothOrder:
    @pytest.mark.parametrize("variant", ["taer", "taerlite"])
    def test_phase_preserved_and_never_amplified(self, variant, rng, model_cache):
        graph, weights = model_cache(variant, 0)
        x = random_spec(rng, 1, 12)
        out = forward(graph, weights, x)
        h0 = out.orders[0].term
        ref = x[0]
        mask = np.abs(ref) > 1e-8
        dphi = np.angle(h0[mask]) - np.angle(ref[mask])
        assert np.max(np.abs(dphi)) < 1e-12
        gains = np.abs(h0[mask]) / np.abs(ref[mask])
        assert np.all(gains > 0.0) and np.all(gains < 1.0)
        np.testing.assert_array_equal(out.enhanced, h0)

    def test_q0_enhanced_is_exactly_order0(self, rng, model_cache):
        graph, weights = model_cache("taer", 0)
        out = forward(graph, weights, random_spec(rng, 1, 5))
        assert np.array_equal(out.enhanced, out.orders[0].term)


class TestRecursion:
    @pytest.mark.parametrize("variant", ["taer", "taerlite"])
    def test_zero_surrogate_heads_collapse_to_zeroth(self, variant, rng, model_cache):
        graph, weights = model_cache(variant, 3)
        w = dict(weights)
        for k in w:
            if "/head_" in k:
                w[k] = np.zeros_like(w[k])
        out = forward(graph, w, random_spec(rng, 1, 8))
        for q in range(1, 4):
            assert np.max(np.abs(out.orders[q].term)) == 0.0
        assert np.max(np.abs(out.enhanced - out.orders[0].term)) <= 1e-7

    def test_forced_constant_orders_superimpose(self):
        """Terms {2, 1, 1, 1} blend to 2 + 1 + 1/2 + 1/6 = 3.6667."""
        shape = (6, 161)
        orders = [np.full(shape, c, dtype=complex) for c in (2.0, 1.0, 1.0, 1.0)]
        partial, enhanced = superimpose(orders)
        np.testing.assert_allclose(enhanced, 2 + 1 + 0.5 + 1 / 6, atol=1e-12)
        assert len(partial) == 4

    def test_partial_sums_telescope(self, rng, model_cache):
        graph, weights = model_cache("taerlite", 3)
        out = forward(graph, weights, random_spec(rng, 1, 7))
        for q in range(1, 4):
            gap = out.partial_sums[q] - out.partial_sums[q - 1]
            np.testing.assert_allclose(gap, out.orders[q].term / math.factorial(q),
                                       atol=1e-12)
        assert np.array_equal(out.enhanced, out.partial_sums[-1])


class TestErrorsAndChannels:
    def test_channel_mismatch(self, rng, model_cache):
        graph, weights = model_cache("taer", 0)
        with pytest.raises(EngineError, match="channel"):
            forward(graph, weights, random_spec(rng, 3, 5))

    def test_archive_graph_mismatch(self, rng, model_cache):
        graph, _ = model_cache("taerlite", 1)
        wrong = random_archive(model_cache("taerlite", 2)[0])
        with pytest.raises(EngineError):
            EngineSession(graph, wrong)

    def test_identical_copies_invariant_under_channel_permutation(
            self, rng, model_cache):
        """M identical mono copies: permuting non-reference channels must
        not change the output (weights symmetrized by construction since
        the input planes are equal)."""
        for variant in ("taer", "taerlite"):
            graph, weights = model_cache(variant, 1, channels=3)
            mono = random_spec(rng, 1, 6)[0]
            x = np.stack([mono, mono, mono])
            base = forward(graph, weights, x).enhanced
            perm = forward(graph, weights, x[[0, 2, 1]]).enhanced
            assert np.max(np.abs(base - perm)) <= 1e-6

    def test_symmetrized_weights_full_permutation_invariance(self, rng, model_cache):
        """TaEr with first-layer planes tied across non-reference channels
        is exactly invariant to permuting distinct non-reference inputs
        (the first convolution sums channel contributions linearly)."""
        graph, weights = model_cache("taer", 1, channels=4)
        w = dict(weights)
        for key in ("zeroth/rel1/glu.a.w", "zeroth/rel1/glu.b.w"):
            t = w[key].copy()  # (64, 8, 1, 3); planes 2m, 2m+1 per channel
            for m in (2, 3):
                t[:, 2 * m : 2 * m + 2] = t[:, 2:4]
            w[key] = t
        x = random_spec(rng, 4, 6)
        base = forward(graph, w, x).enhanced
        perm = forward(graph, w, x[[0, 3, 1, 2]]).enhanced
        assert np.max(np.abs(base - perm)) <= 1e-6


class TestStreamingEquivalence:
    @pytest.mark.parametrize("variant", ["taer", "taerlite"])
    @pytest.mark.parametrize("order", [0, 1, 2])
    def test_frame_by_frame_equals_whole(self, variant, order, rng, model_cache):
        graph, weights = model_cache(variant, order)
        x = random_spec(rng, 1, 9)
        whole = forward(graph, weights, x)
        session = EngineSession(graph, weights)
        finals = [session.step(x[:, t, :])[2] for t in range(9)]
        assert np.max(np.abs(np.stack(finals) - whole.final)) <= 1e-6


class TestDiagnostics:
    def test_remaining_mse_identical_outputs(self, rng, model_cache):
        graph, weights = model_cache("taerlite", 1)
        out = forward(graph, weights, random_spec(rng, 1, 5))
        assert remaining_term_mse(out, out) == 0.0

    def test_remaining_mse_constant_gap(self, rng, model_cache):
        graph, weights = model_cache("taerlite", 1)
        out = forward(graph, weights, random_spec(rng, 1, 5))
        import copy
        shifted = copy.deepcopy(out)
        shifted.enhanced = out.enhanced + (3.0 + 3.0j)
        assert remaining_term_mse(out, shifted) == pytest.approx(2 * 9.0, rel=1e-12)

    def test_remaining_mse_matches_double_loop(self, rng):
        a = rng.normal(size=(7, 11)) + 1j * rng.normal(size=(7, 11))
        b = rng.normal(size=(7, 11)) + 1j * rng.normal(size=(7, 11))

        class Stub:
            pass

        sa, sb = Stub(), Stub()
        sa.enhanced, sb.enhanced = a, b
        acc_r = acc_i = 0.0
        for l in range(7):
            for k in range(11):
                acc_r += abs(b[l, k].real - a[l, k].real) ** 2
                acc_i += abs(b[l, k].imag - a[l, k].imag) ** 2
        ref = acc_r / 77 + acc_i / 77
        assert abs(remaining_term_mse(sa, sb) - ref) <= 1e-9

    def test_approximation_mse_examples(self, rng):
        clean = rng.normal(size=(10, 161)) + 1j * rng.normal(size=(10, 161))
        assert np.all(approximation_mse(clean, clean) == 0)
        bumped = clean.copy()
        bumped[4, 20] += 1.0 + 1.0j
        v = approximation_mse(bumped, clean)
        assert v[20] == pytest.approx(2.0 / 10.0, rel=1e-12)
        assert np.all(v[np.arange(161) != 20] == 0)

    def test_approximation_mse_matches_naive(self, rng):
        est = rng.normal(size=(6, 9)) + 1j * rng.normal(size=(6, 9))
        ref = rng.normal(size=(6, 9)) + 1j * rng.normal(size=(6, 9))
        naive = np.zeros(9)
        for k in range(9):
            for l in range(6):
                naive[k] += (est[l, k].real - ref[l, k].real) ** 2 \
                    + (est[l, k].imag - ref[l, k].imag) ** 2
            naive[k] /= 6
        assert np.max(np.abs(approximation_mse(est, ref) - naive)) <= 1e-9

    def test_shape_mismatch_errors(self, rng):
        with pytest.raises(EngineError):
            approximation_mse(np.zeros((3, 4)), np.zeros((3, 5)))


class TestOrderDumps:
    def test_dump_round_trip(self, tmp_path, rng, model_cache):
        graph, weights = model_cache("taerlite", 2)
        out = forward(graph, weights, random_spec(rng, 1, 6))
        paths = dump_orders(out, tmp_path / "orders")
        assert len(paths) == 3
        for q, p in enumerate(paths):
            mag, got_q = read_order_dump(p)
            assert got_q == q
            np.testing.assert_allclose(
                mag, np.abs(out.orders[q].term), atol=1e-6)

    def test_header_layout(self, tmp_path):
        from taer.engine import write_order_dump
        term = np.ones((3, 5), dtype=complex)
        p = tmp_path / "o.bin"
        write_order_dump(p, term, 2)
        raw = p.read_bytes()
        assert raw[:4] == b"TAYD"
        assert raw[4:16] == (3).to_bytes(4, "little") + (5).to_bytes(4, "little") \
            + (2).to_bytes(4, "little")
        assert len(raw) == 16 + 4 * 15
