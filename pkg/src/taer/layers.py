"""Inference-time neural layers with explicit streaming state.

Every layer processes one frame at a time.  Feedforward layers with
time-axis kernels own a ring buffer of past input frames sized to their
exact lookback ((kernel_t - 1) * dilation); recurrent layers own hidden
(and cell) vectors.  The time axis is never zero-padded mid-stream: the
stream starts cold with zero history and then buffers real frames.

Shape conventions:
  2-D features: (channels, freq) arrays; stride and kernel freq-axis
  semantics follow valid convolution, F_out = (F_in - k_f)//s_f + 1.
  Transposed convs transpose the frequency axis only; their time taps
  behave like an ordinary causal convolution.
  1-D features: (dim,) vectors.

Weight tensors live in a flat dict keyed by "<layer name>.<role>".
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

CLN_EPS = 1e-8

KINDS = (
    "conv2d", "deconv2d", "glu2d", "deglu2d", "conv1d",
    "gru_grouped", "lstm", "linear", "cln", "prelu", "sigmoid", "tanh",
)


class LayerError(ValueError):
    """Raised for shape or configuration mismatches, naming the layer."""


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    name: str
    in_ch: int = 0
    out_ch: int = 0
    kernel: tuple[int, int] = (1, 1)   # (time, freq) for 2-D; (time, 1) for 1-D
    stride: int = 1                    # frequency axis only
    dilation: int = 1                  # time axis, conv1d only
    groups: int = 1
    in_freq: int = 0
    out_freq: int = 0
    eps: float = CLN_EPS

    def __post_init__(self):
        if self.kind not in KINDS:
            raise LayerError(f"{self.name}: unknown layer kind {self.kind!r}")
        if min(self.kernel) < 1 or self.stride < 1 or self.dilation < 1:
            raise LayerError(f"{self.name}: kernel/stride/dilation must be positive")
        if self.kind == "gru_grouped":
            if self.in_ch % self.groups or self.out_ch % self.groups:
                raise LayerError(
                    f"{self.name}: groups={self.groups} must divide "
                    f"in={self.in_ch} and hidden={self.out_ch}"
                )

    # -- static shape bookkeeping -------------------------------------

    def weight_shapes(self) -> dict[str, tuple[int, ...]]:
        k, n = self.kind, self.name
        if k == "conv2d" or k == "deconv2d":
            return {f"{n}.w": (self.out_ch, self.in_ch, *self.kernel), f"{n}.b": (self.out_ch,)}
        if k == "glu2d" or k == "deglu2d":
            shp = (self.out_ch, self.in_ch, *self.kernel)
            return {f"{n}.a.w": shp, f"{n}.a.b": (self.out_ch,),
                    f"{n}.b.w": shp, f"{n}.b.b": (self.out_ch,)}
        if k == "conv1d":
            return {f"{n}.w": (self.out_ch, self.in_ch, self.kernel[0]), f"{n}.b": (self.out_ch,)}
        if k == "gru_grouped":
            ig, hg = self.in_ch // self.groups, self.out_ch // self.groups
            out = {}
            for g in range(self.groups):
                out[f"{n}.g{g}.w"] = (3 * hg, ig)
                out[f"{n}.g{g}.u"] = (3 * hg, hg)
                out[f"{n}.g{g}.b"] = (3 * hg,)
            return out
        if k == "lstm":
            h = self.out_ch
            return {f"{n}.w": (4 * h, self.in_ch), f"{n}.u": (4 * h, h), f"{n}.b": (4 * h,)}
        if k == "linear":
            return {f"{n}.w": (self.out_ch, self.in_ch), f"{n}.b": (self.out_ch,)}
        if k == "cln":
            return {f"{n}.gain": (self.in_ch,), f"{n}.bias": (self.in_ch,)}
        if k == "prelu":
            return {f"{n}.slope": (self.in_ch,)}
        return {}

    def param_count(self) -> int:
        return int(sum(np.prod(s) for s in self.weight_shapes().values()))

    def macs_per_frame(self) -> int:
        """Multiply-accumulates per output frame.

        Convention: one MAC per weight multiply (transposed convs counted
        at their input positions), recurrent gate matmuls in full,
        normalizations 2 ops/element, activations 1 op/element.
        """
        k = self.kind
        kt, kf = self.kernel
        if k == "conv2d":
            return self.out_ch * self.in_ch * kt * kf * self.out_freq
        if k == "deconv2d":
            return self.out_ch * self.in_ch * kt * kf * self.in_freq
        if k in ("glu2d", "deglu2d"):
            per = self.out_ch * self.in_ch * kt * kf
            pos = self.out_freq if k == "glu2d" else self.in_freq
            return 2 * per * pos + 2 * self.out_ch * self.out_freq
        if k == "conv1d":
            return self.out_ch * self.in_ch * kt
        if k == "gru_grouped":
            ig, hg = self.in_ch // self.groups, self.out_ch // self.groups
            return self.groups * (3 * (ig * hg + hg * hg) + 6 * hg)
        if k == "lstm":
            return 4 * (self.in_ch * self.out_ch + self.out_ch * self.out_ch) + 8 * self.out_ch
        if k == "linear":
            return self.out_ch * self.in_ch
        if k == "cln":
            return 2 * self.in_ch * max(self.in_freq, 1)
        if k in ("prelu", "sigmoid", "tanh"):
            return self.in_ch * max(self.in_freq, 1)
        return 0

    def lookback(self) -> int:
        """Past input frames this layer taps directly (0 for recurrent)."""
        if self.kind in ("conv2d", "deconv2d", "glu2d", "deglu2d"):
            return self.kernel[0] - 1
        if self.kind == "conv1d":
            return (self.kernel[0] - 1) * self.dilation
        return 0

    @property
    def is_recurrent(self) -> bool:
        return self.kind in ("gru_grouped", "lstm")

    def init_state(self):
        if self.kind in ("conv2d", "deconv2d", "glu2d", "deglu2d", "conv1d"):
            n = self.lookback()
            return deque(maxlen=n) if n else None
        if self.kind == "gru_grouped":
            return np.zeros(self.out_ch, dtype=np.float64)
        if self.kind == "lstm":
            return [np.zeros(self.out_ch, dtype=np.float64),
                    np.zeros(self.out_ch, dtype=np.float64)]
        if self.kind == "cln":
            return [0.0, 0.0, 0.0]  # count, sum, sum of squares
        return None


# -- step implementations ---------------------------------------------

_WIN_IDX_CACHE: dict[tuple[int, int, int], np.ndarray] = {}


def _freq_windows(x: np.ndarray, kf: int, stride: int) -> np.ndarray:
    f_out = (x.shape[1] - kf) // stride + 1
    key = (x.shape[1], kf, stride)
    idx = _WIN_IDX_CACHE.get(key)
    if idx is None:
        idx = (np.arange(f_out) * stride)[:, None] + np.arange(kf)[None, :]
        _WIN_IDX_CACHE[key] = idx
    return x[:, idx]  # (C, f_out, kf)


def _gather_taps(spec: LayerSpec, x: np.ndarray, state, offsets) -> list[np.ndarray]:
    """Return input frames at the given past offsets (0 = current)."""
    out = []
    for off in offsets:
        if off == 0:
            out.append(x)
        elif state is not None and len(state) >= off:
            out.append(state[-off])
        else:
            out.append(np.zeros_like(x))
    return out


def _conv2d_core(spec, w, taps, transposed: bool) -> np.ndarray:
    kt, kf = spec.kernel
    if not transposed:
        y = None
        for tau, frame in enumerate(taps):
            xw = _freq_windows(frame, kf, spec.stride)  # (C_in, F_out, kf)
            part = np.tensordot(w[:, :, tau, :], xw, axes=([1, 2], [0, 2]))
            y = part if y is None else y + part
        return y
    f_in = taps[0].shape[1]
    base = (f_in - 1) * spec.stride + kf
    opad = spec.out_freq - base
    if opad < 0 or opad > spec.stride - 1:
        raise LayerError(f"{spec.name}: cannot reach out_freq={spec.out_freq} from {f_in}")
    y = np.zeros((spec.out_ch, spec.out_freq), dtype=np.float64)
    pos = np.arange(f_in) * spec.stride
    for tau, frame in enumerate(taps):
        for j in range(kf):
            y[:, pos + j] += w[:, :, tau, j] @ frame
    return y


def _push(state, x) -> None:
    if state is not None and state.maxlen:
        state.append(x)


def layer_step(spec: LayerSpec, weights: dict, x: np.ndarray, state):
    """Advance one frame through the layer; mutates state in place."""
    k, n = spec.kind, spec.name

    if k in ("conv2d", "deconv2d", "glu2d", "deglu2d"):
        if x.ndim != 2 or x.shape[0] != spec.in_ch:
            raise LayerError(f"{n}: expected ({spec.in_ch}, F) input, got {x.shape}")
        kt = spec.kernel[0]
        taps = _gather_taps(spec, x, state, range(kt - 1, -1, -1))
        transposed = k in ("deconv2d", "deglu2d")
        if k in ("conv2d", "deconv2d"):
            y = _conv2d_core(spec, weights[f"{n}.w"], taps, transposed) + weights[f"{n}.b"][:, None]
        else:
            a = _conv2d_core(spec, weights[f"{n}.a.w"], taps, transposed) + weights[f"{n}.a.b"][:, None]
            g = _conv2d_core(spec, weights[f"{n}.b.w"], taps, transposed) + weights[f"{n}.b.b"][:, None]
            y = a * _sigmoid(g)
        _push(state, x)
        return y

    if k == "conv1d":
        if x.shape != (spec.in_ch,):
            raise LayerError(f"{n}: expected ({spec.in_ch},) input, got {x.shape}")
        kk, d = spec.kernel[0], spec.dilation
        taps = _gather_taps(spec, x, state, [(kk - 1 - i) * d for i in range(kk)])
        w = weights[f"{n}.w"]
        y = weights[f"{n}.b"].copy()
        for i, frame in enumerate(taps):
            y += w[:, :, i] @ frame
        _push(state, x)
        return y

    if k == "gru_grouped":
        if x.shape != (spec.in_ch,):
            raise LayerError(f"{n}: expected ({spec.in_ch},) input, got {x.shape}")
        g = spec.groups
        ig, hg = spec.in_ch // g, spec.out_ch // g
        h_new = np.empty(spec.out_ch, dtype=np.float64)
        for gi in range(g):
            xg = x[gi * ig : (gi + 1) * ig]
            hg_prev = state[gi * hg : (gi + 1) * hg]
            w, u, b = (weights[f"{n}.g{gi}.{r}"] for r in ("w", "u", "b"))
            zx, rx, nx = np.split(w @ xg + b, 3)
            zh, rh, nh = np.split(u @ hg_prev, 3)
            z = _sigmoid(zx + zh)
            r = _sigmoid(rx + rh)
            cand = np.tanh(nx + r * nh)
            h_new[gi * hg : (gi + 1) * hg] = (1.0 - z) * cand + z * hg_prev
        state[:] = h_new
        return h_new.copy()

    if k == "lstm":
        if x.shape != (spec.in_ch,):
            raise LayerError(f"{n}: expected ({spec.in_ch},) input, got {x.shape}")
        h, c = state
        gates = weights[f"{n}.w"] @ x + weights[f"{n}.u"] @ h + weights[f"{n}.b"]
        i, f, g_, o = np.split(gates, 4)
        c_new = _sigmoid(f) * c + _sigmoid(i) * np.tanh(g_)
        h_new = _sigmoid(o) * np.tanh(c_new)
        state[0], state[1] = h_new, c_new
        return h_new.copy()

    if k == "linear":
        if x.shape != (spec.in_ch,):
            raise LayerError(f"{n}: expected ({spec.in_ch},) input, got {x.shape}")
        return weights[f"{n}.w"] @ x + weights[f"{n}.b"]

    if k == "cln":
        state[0] += x.size
        state[1] += float(x.sum())
        state[2] += float((x * x).sum())
        mean = state[1] / state[0]
        var = max(state[2] / state[0] - mean * mean, 0.0)
        norm = (x - mean) / np.sqrt(var + spec.eps)
        gain, bias = weights[f"{n}.gain"], weights[f"{n}.bias"]
        if x.ndim == 2:
            return norm * gain[:, None] + bias[:, None]
        return norm * gain + bias

    if k == "prelu":
        slope = weights[f"{n}.slope"]
        a = slope[:, None] if x.ndim == 2 else slope
        return np.where(x >= 0.0, x, a * x)

    if k == "sigmoid":
        return _sigmoid(x)
    if k == "tanh":
        return np.tanh(x)
    raise LayerError(f"{n}: unhandled kind {k}")


def _sigmoid(x):
    # split by sign to avoid exp overflow warnings on large inputs
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out
