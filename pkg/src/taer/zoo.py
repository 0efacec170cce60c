"""Builders for the TaEr and TaErLite graphs, plus the receptive-field
probe and whole-model bookkeeping.

TaEr 0th-order: five recalibration encoding layers (GLU conv k=(1,3)
s=(1,2), 64 channels, frequency chain 161-80-39-19-9-4, each followed by
a residual U-Net block of depth {4,3,2,1,0} with k=(2,3) convs), a
256-wide bottleneck of two S-TCN groups (four S-TCMs each, dilations
{1,2,5,9}), and five mirrored decoding layers with encoder skip
concatenation, ending in a sigmoid gain plane.  Each high-order module:
pointwise input conv, two S-TCN groups, residual LSTM(256), two linear
heads emitting the real/imaginary planes.

TaErLite 0th-order: ERB-compressed magnitudes through two grouped GRU
layers (128 wide, 2 groups, shuffled between layers) into 32 sigmoid
band gains; a separate five-layer 32-channel GLU encoder on the
linear-scale input feeds the high-order modules (two grouped GRU layers,
256 wide); a two-layer GRU post-filter emits one frame-level gain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .erb import build_erb_bank
from .graph import (
    AddSaved, Flatten, ModelGraph, PopConcatSkip, PushSkip, Save, Shuffle,
    Surrogate, Tap, Unflatten, path_has_recurrence, path_lookback, run_frame,
)
from .layers import LayerSpec

FREQ_CHAIN = (161, 80, 39, 19, 9, 4)
ENCODER_UNET_DEPTHS = (4, 3, 2, 1, 0)
DECODER_UNET_DEPTHS = (1, 2, 3, 4, 0)
STCN_DILATIONS = (1, 2, 5, 9)
STCN_GROUPS = 2
BOTTLENECK_DIM = 64 * 4
ERB_BANDS = 32


def _down_freq(f: int) -> int:
    return (f - 3) // 2 + 1


def _conv_set(name: str, kind: str, in_ch: int, out_ch: int, kernel, stride,
              in_freq: int, out_freq: int) -> list:
    """A convolution followed by the standard cLN + PReLU pair."""
    return [
        LayerSpec(kind, name, in_ch=in_ch, out_ch=out_ch, kernel=kernel,
                  stride=stride, in_freq=in_freq, out_freq=out_freq),
        LayerSpec("cln", f"{name}.cln", in_ch=out_ch, in_freq=out_freq),
        LayerSpec("prelu", f"{name}.prelu", in_ch=out_ch, in_freq=out_freq),
    ]


def _unet_block(prefix: str, depth: int, freq: int, ch: int = 64) -> list:
    """Residual U-Net block: depth downsampling convs k=(2,3) s=(1,2),
    mirrored transposed convs with skip concatenation, residual add."""
    if depth == 0:
        return []
    ops: list = [Save(prefix)]
    freqs = [freq]
    for _ in range(depth):
        freqs.append(_down_freq(freqs[-1]))
    for j in range(depth):
        ops += _conv_set(f"{prefix}/down{j + 1}", "conv2d", ch, ch, (2, 3), 2,
                         freqs[j], freqs[j + 1])
        ops.append(PushSkip())
    for j in range(depth):
        ops.append(PopConcatSkip())
        ops += _conv_set(f"{prefix}/up{j + 1}", "deconv2d", 2 * ch, ch, (2, 3), 2,
                         freqs[depth - j], freqs[depth - j - 1])
    ops.append(AddSaved(prefix))
    return ops


def _stcm(prefix: str, dilation: int, dim: int = 256, hidden: int = 64) -> list:
    """Squeezed temporal convolution module: pointwise compress, causal
    dilated conv (k=5), pointwise expand, residual add."""
    return [
        Save(prefix),
        LayerSpec("conv1d", f"{prefix}/in", in_ch=dim, out_ch=hidden, kernel=(1, 1)),
        LayerSpec("prelu", f"{prefix}/in.prelu", in_ch=hidden),
        LayerSpec("cln", f"{prefix}/in.cln", in_ch=hidden),
        LayerSpec("conv1d", f"{prefix}/dil", in_ch=hidden, out_ch=hidden,
                  kernel=(5, 1), dilation=dilation),
        LayerSpec("prelu", f"{prefix}/dil.prelu", in_ch=hidden),
        LayerSpec("cln", f"{prefix}/dil.cln", in_ch=hidden),
        LayerSpec("conv1d", f"{prefix}/out", in_ch=hidden, out_ch=dim, kernel=(1, 1)),
        AddSaved(prefix),
    ]


def _stcn(prefix: str, dim: int = 256) -> list:
    ops: list = []
    for g in range(STCN_GROUPS):
        for i, d in enumerate(STCN_DILATIONS):
            ops += _stcm(f"{prefix}/stcn{g + 1}/tcm{i + 1}", d, dim=dim)
    return ops


def _taer_surrogate(q: int, in_dim: int) -> Surrogate:
    p = f"surrogate{q}"
    trunk: list = [
        LayerSpec("conv1d", f"{p}/in", in_ch=in_dim, out_ch=256, kernel=(1, 1)),
        LayerSpec("prelu", f"{p}/in.prelu", in_ch=256),
        LayerSpec("cln", f"{p}/in.cln", in_ch=256),
    ]
    trunk += _stcn(p)
    trunk += [
        Save(f"{p}/res"),
        LayerSpec("lstm", f"{p}/lstm", in_ch=256, out_ch=256),
        AddSaved(f"{p}/res"),
    ]
    head_r = LayerSpec("linear", f"{p}/head_r", in_ch=256, out_ch=161)
    head_i = LayerSpec("linear", f"{p}/head_i", in_ch=256, out_ch=161)
    return Surrogate(trunk=tuple(trunk), head_r=head_r, head_i=head_i)


def build_taer(order: int, channels: int = 1) -> ModelGraph:
    if order < 0 or channels < 1:
        raise ValueError(f"need order >= 0 and channels >= 1, got {order}, {channels}")
    zeroth: list = []
    in_ch = 2 * channels
    for i in range(5):
        zeroth += _conv_set(f"zeroth/rel{i + 1}/glu", "glu2d",
                            in_ch if i == 0 else 64, 64, (1, 3), 2,
                            FREQ_CHAIN[i], FREQ_CHAIN[i + 1])
        zeroth += _unet_block(f"zeroth/rel{i + 1}/ub", ENCODER_UNET_DEPTHS[i],
                              FREQ_CHAIN[i + 1])
        zeroth.append(PushSkip())
    zeroth.append(Flatten())
    zeroth.append(Tap("R"))
    zeroth += _stcn("zeroth")
    zeroth.append(Unflatten(64, 4))
    dec_chain = tuple(reversed(FREQ_CHAIN))
    for j in range(5):
        zeroth.append(PopConcatSkip())
        zeroth += _conv_set(f"zeroth/rdl{j + 1}/deglu", "deglu2d", 128, 64, (1, 3), 2,
                            dec_chain[j], dec_chain[j + 1])
        zeroth += _unet_block(f"zeroth/rdl{j + 1}/ub", DECODER_UNET_DEPTHS[j],
                              dec_chain[j + 1])
    zeroth.append(LayerSpec("conv2d", "zeroth/gain", in_ch=64, out_ch=1,
                            kernel=(1, 1), in_freq=161, out_freq=161))
    zeroth.append(LayerSpec("sigmoid", "zeroth/gain.sigmoid", in_ch=1, in_freq=161))

    surr_in = 2 * 161 + BOTTLENECK_DIM
    surrogates = tuple(_taer_surrogate(q + 1, surr_in) for q in range(order))
    return ModelGraph(variant="taer", order=order, channels=channels, num_bins=161,
                      zeroth=tuple(zeroth), surrogates=surrogates,
                      r_dim=BOTTLENECK_DIM)


def _lite_surrogate(q: int, in_dim: int) -> Surrogate:
    p = f"surrogate{q}"
    trunk = (
        LayerSpec("conv1d", f"{p}/in", in_ch=in_dim, out_ch=256, kernel=(1, 1)),
        LayerSpec("prelu", f"{p}/in.prelu", in_ch=256),
        LayerSpec("cln", f"{p}/in.cln", in_ch=256),
        LayerSpec("gru_grouped", f"{p}/gru1", in_ch=256, out_ch=256, groups=2),
        Shuffle(2),
        LayerSpec("gru_grouped", f"{p}/gru2", in_ch=256, out_ch=256, groups=2),
    )
    head_r = LayerSpec("linear", f"{p}/head_r", in_ch=256, out_ch=161)
    head_i = LayerSpec("linear", f"{p}/head_i", in_ch=256, out_ch=161)
    return Surrogate(trunk=trunk, head_r=head_r, head_i=head_i)


def build_taerlite(order: int, channels: int = 1) -> ModelGraph:
    if order < 0 or channels < 1:
        raise ValueError(f"need order >= 0 and channels >= 1, got {order}, {channels}")
    bank = build_erb_bank(ERB_BANDS, 161, 16000)
    zeroth = (
        LayerSpec("gru_grouped", "zeroth/gru1", in_ch=ERB_BANDS * channels,
                  out_ch=128, groups=2),
        Shuffle(2),
        LayerSpec("gru_grouped", "zeroth/gru2", in_ch=128, out_ch=128, groups=2),
        LayerSpec("linear", "zeroth/out", in_ch=128, out_ch=ERB_BANDS),
        LayerSpec("sigmoid", "zeroth/out.sigmoid", in_ch=ERB_BANDS),
    )
    encoder: list = []
    in_ch = 2 * channels
    for i in range(5):
        encoder += _conv_set(f"encoder/glu{i + 1}", "glu2d",
                             in_ch if i == 0 else 32, 32, (1, 3), 2,
                             FREQ_CHAIN[i], FREQ_CHAIN[i + 1])
    encoder.append(Flatten())
    r_dim = 32 * 4
    surr_in = 2 * 161 + r_dim
    surrogates = tuple(_lite_surrogate(q + 1, surr_in) for q in range(order))
    post = (
        LayerSpec("gru_grouped", "post/gru1", in_ch=ERB_BANDS, out_ch=32, groups=1),
        LayerSpec("gru_grouped", "post/gru2", in_ch=32, out_ch=32, groups=1),
        LayerSpec("linear", "post/out", in_ch=32, out_ch=1),
        LayerSpec("sigmoid", "post/out.sigmoid", in_ch=1),
    )
    return ModelGraph(variant="taerlite", order=order, channels=channels, num_bins=161,
                      zeroth=zeroth, surrogates=surrogates, encoder=tuple(encoder),
                      post_filter=post, erb=bank, r_dim=r_dim, erb_bands=ERB_BANDS)


def build(variant: str, order: int, channels: int = 1) -> ModelGraph:
    if variant == "taer":
        return build_taer(order, channels)
    if variant == "taerlite":
        return build_taerlite(order, channels)
    raise ValueError(f"unknown variant {variant!r}; expected 'taer' or 'taerlite'")


# -- receptive field ----------------------------------------------------

@dataclass(frozen=True)
class ReceptiveField:
    zeroth: int
    high_order: int


def _path_rf(ops) -> int:
    """Consecutive input frames influencing one output frame.

    Feedforward time taps accumulate along the path; recurrent layers
    count as one past frame plus the current frame (their carried state
    summarizes older history without buffering input frames), so the
    path width is the larger of the two windows.
    """
    ff = path_lookback(ops)
    floor = 2 if path_has_recurrence(ops) else 1
    return max(ff + 1, floor)


def _high_order_path(graph: ModelGraph):
    if not graph.surrogates:
        return None
    s = graph.surrogates[0]
    return (*graph.encoder, *s.trunk, s.head_r, s.head_i)


def receptive_field(graph: ModelGraph) -> ReceptiveField:
    high = _high_order_path(graph)
    return ReceptiveField(
        zeroth=_path_rf(graph.zeroth),
        high_order=_path_rf(high) if high is not None else 0,
    )


def _probe_path(graph: ModelGraph, weights: dict, which: str, margin: int = 24) -> int:
    """Measure a path's receptive field by perturbing one input frame.

    Runs the path frame-by-frame twice on identical random inputs except
    for one perturbed frame; outputs outside the dependence window are
    bitwise identical, so the changed output frames delimit the window
    exactly.  Recurrent hidden states and cumulative-norm statistics are
    reset every frame so that only direct time taps register (neither
    buffers input frames); the definitional one-past-frame floor for
    recurrent layers is applied afterwards.
    """
    rng = np.random.default_rng(0)
    if which == "zeroth":
        ops = graph.zeroth
        recurrent = path_has_recurrence(ops)
        expected = path_lookback(ops)
        if graph.variant == "taer":
            mk = lambda: rng.uniform(-1, 1, (2 * graph.channels, graph.num_bins))
        else:
            mk = lambda: rng.uniform(0, 1, (graph.erb_bands * graph.channels,))
        runner = lambda frame, state: run_frame(ops, weights, frame, state)
        specs = [op for op in ops if isinstance(op, LayerSpec)]
    else:
        s = graph.surrogates[0]
        trunk_ops = (*s.trunk, s.head_r)
        specs = [op for op in (*graph.encoder, *trunk_ops) if isinstance(op, LayerSpec)]
        recurrent = any(sp.is_recurrent for sp in specs)
        expected = sum(sp.lookback() for sp in specs)
        prev_term = rng.uniform(-1, 1, 2 * graph.num_bins)
        if graph.encoder:
            mk = lambda: rng.uniform(-1, 1, (2 * graph.channels, graph.num_bins))

            def runner(frame, state):
                r = run_frame(graph.encoder, weights, frame, state)
                return run_frame(trunk_ops, weights,
                                 np.concatenate([prev_term, r]), state)
        else:
            mk = lambda: rng.uniform(-1, 1, (2 * graph.num_bins + graph.r_dim,))
            runner = lambda frame, state: run_frame(trunk_ops, weights, frame, state)

    t0 = 4
    total = t0 + expected + margin
    frames = [mk() for _ in range(total)]
    bumped = [f.copy() for f in frames]
    bumped[t0] = bumped[t0] + 0.25

    def drive(inputs):
        state = {sp.name: sp.init_state() for sp in specs}
        outs = []
        for f in inputs:
            for sp in specs:
                if sp.kind == "gru_grouped":
                    state[sp.name][:] = 0.0
                elif sp.kind == "lstm":
                    state[sp.name][0][:] = 0.0
                    state[sp.name][1][:] = 0.0
                elif sp.kind == "cln":
                    state[sp.name][:] = [0.0, 0.0, 0.0]
            outs.append(runner(f, state))
        return outs

    base, pert = drive(frames), drive(bumped)
    changed = [t for t, (a, b) in enumerate(zip(base, pert)) if not np.array_equal(a, b)]
    if not changed or changed[0] != t0:
        raise AssertionError(f"probe: causality violated on {which} path: {changed[:3]}")
    measured_ff = changed[-1] - t0
    return max(measured_ff + 1, 2 if recurrent else 1)


def probe_receptive_field(graph: ModelGraph, weights: dict) -> ReceptiveField:
    """Numeric perturbation-probe counterpart of receptive_field()."""
    high = _high_order_path(graph)
    return ReceptiveField(
        zeroth=_probe_path(graph, weights, "zeroth"),
        high_order=_probe_path(graph, weights, "high") if high is not None else 0,
    )
