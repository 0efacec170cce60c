"""Order-term recursion and superimposition over complex spectrograms.

Per frame: the 0th-order module emits a real gain in (0, 1) per T-F unit
(TaErLite: per ERB band, expanded back to the linear scale) that scales
the reference channel's complex spectrum, leaving phase untouched.
Each high-order module q >= 1 consumes the previous term and a shared
encoded feature R and emits a complex correction P, advancing the
recursion

    H(q) = (q - 1) * H(q - 1) + P(q - 1, H, R)

and the terms superimpose with 1/q! weights into the final estimate.
TaErLite additionally applies a frame-level post-filter gain after the
superimposition; that result is exposed separately as ``final`` so the
superimposed estimate keeps its partial-sum identity.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .graph import ModelGraph, run_frame
from .layers import layer_step
from .weights import WeightArchive, validate

DUMP_MAGIC = b"TAYD"


class EngineError(ValueError):
    """Raised for graph/weights/input mismatches."""


@dataclass
class ComplexSpectrogram:
    """M stacked (T, F) complex planes; channel 0 is the reference."""
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.complex128)
        if self.data.ndim == 2:
            self.data = self.data[None]
        if self.data.ndim != 3:
            raise EngineError(f"expected (M, T, F) spectrogram, got {self.data.shape}")

    @property
    def channel_count(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class OrderTerm:
    q: int
    term: np.ndarray  # (T, F) complex


@dataclass
class TaylorOutput:
    enhanced: np.ndarray            # superimposed estimate, = partial_sums[-1]
    final: np.ndarray               # post-filtered estimate (== enhanced for TaEr)
    orders: list[OrderTerm]
    partial_sums: list[np.ndarray]


def order_weights(order: int) -> np.ndarray:
    return np.array([1.0 / math.factorial(q) for q in range(order + 1)])


def superimpose(orders: list[np.ndarray]) -> tuple[list[np.ndarray], np.ndarray]:
    """Partial sums sum_{j<=q} orders[j]/j! and the full superimposition."""
    acc = np.zeros_like(orders[0])
    partial = []
    for q, term in enumerate(orders):
        acc = acc + term / math.factorial(q)
        partial.append(acc)
    return partial, partial[-1]


def resolve_weights(graph: ModelGraph, weights) -> dict[str, np.ndarray]:
    """Accept a WeightArchive or a plain dict; enforce graph agreement."""
    if isinstance(weights, WeightArchive):
        if (weights.variant, weights.order, weights.channels) != (
                graph.variant, graph.order, graph.channels):
            raise EngineError(
                f"archive is {weights.variant} Q={weights.order} M={weights.channels}, "
                f"graph is {graph.variant} Q={graph.order} M={graph.channels}")
        report = validate(weights, graph)
        if not report.ok:
            raise EngineError(f"archive does not match graph:\n{report.summary()}")
        return weights.astype64()
    return weights


class EngineSession:
    """Single-stream stateful frame processor.

    Owns every layer state plus the frame counter; two streams must not
    share a session.  Graph and weights stay immutable and shareable.
    """

    def __init__(self, graph: ModelGraph, weights):
        self.graph = graph
        self.weights = resolve_weights(graph, weights)
        self.state = graph.make_state()
        self.frames_done = 0

    def reset(self) -> None:
        self.state = self.graph.make_state()
        self.frames_done = 0

    def step(self, frame: np.ndarray) -> tuple[list[np.ndarray], np.ndarray, np.ndarray]:
        """Process one (M, F) complex frame.

        Returns (order terms, superimposed estimate, final estimate) for
        the reference channel, each (F,) complex.
        """
        g = self.graph
        frame = np.asarray(frame, dtype=np.complex128)
        if frame.ndim == 1:
            frame = frame[None]
        if frame.shape != (g.channels, g.num_bins):
            raise EngineError(
                f"expected ({g.channels}, {g.num_bins}) frame, got {frame.shape}")
        ref = frame[0]
        planes = np.empty((2 * g.channels, g.num_bins), dtype=np.float64)
        planes[0::2] = frame.real
        planes[1::2] = frame.imag

        taps: dict[str, np.ndarray] = {}
        if g.variant == "taer":
            gain = run_frame(g.zeroth, self.weights, planes, self.state, taps)[0]
            r_feat = taps["R"]
        else:
            bands = g.erb.to_erb(np.abs(frame)).reshape(-1)
            band_gain = run_frame(g.zeroth, self.weights, bands, self.state)
            gain = g.erb.to_linear(band_gain)
            r_feat = run_frame(g.encoder, self.weights, planes, self.state)

        term = gain * ref
        orders = [term]
        for q, surr in enumerate(g.surrogates, start=1):
            feat = np.concatenate([term.real, term.imag, r_feat])
            trunk = run_frame(surr.trunk, self.weights, feat, self.state)
            p_r = layer_step(surr.head_r, self.weights, trunk, None)
            p_i = layer_step(surr.head_i, self.weights, trunk, None)
            term = (q - 1) * term + (p_r + 1j * p_i)
            orders.append(term)

        _, enhanced = superimpose(orders)
        final = enhanced
        if g.post_filter:
            post_bands = g.erb.to_erb(np.abs(enhanced))
            pf = run_frame(g.post_filter, self.weights, post_bands, self.state)
            final = float(pf[0]) * enhanced
        self.frames_done += 1
        return orders, enhanced, final


def forward(graph: ModelGraph, weights, noisy: ComplexSpectrogram | np.ndarray,
            session: EngineSession | None = None) -> TaylorOutput:
    """Run the whole spectrogram through the recursion, frame by frame."""
    spec = noisy if isinstance(noisy, ComplexSpectrogram) else ComplexSpectrogram(noisy)
    if spec.channel_count != graph.channels:
        raise EngineError(
            f"graph expects {graph.channels} channels, input has {spec.channel_count}")
    if session is None:
        session = EngineSession(graph, weights)
    t_frames = spec.data.shape[1]
    n_orders = graph.order + 1
    order_mats = [np.zeros((t_frames, graph.num_bins), dtype=np.complex128)
                  for _ in range(n_orders)]
    enhanced = np.zeros((t_frames, graph.num_bins), dtype=np.complex128)
    final = np.zeros_like(enhanced)
    for t in range(t_frames):
        orders_t, enh_t, fin_t = session.step(spec.data[:, t, :])
        for q in range(n_orders):
            order_mats[q][t] = orders_t[q]
        enhanced[t] = enh_t
        final[t] = fin_t
    partial, _ = superimpose(order_mats)
    return TaylorOutput(
        enhanced=enhanced,
        final=final,
        orders=[OrderTerm(q=q, term=m) for q, m in enumerate(order_mats)],
        partial_sums=partial,
    )


# -- diagnostics --------------------------------------------------------

def remaining_term_mse(out_q: TaylorOutput, out_q1: TaylorOutput) -> float:
    """Mean squared gap between the superimposed estimates at adjacent
    orders, real and imaginary parts accumulated separately."""
    a, b = out_q.enhanced, out_q1.enhanced
    if a.shape != b.shape:
        raise EngineError(f"shape mismatch: {a.shape} vs {b.shape}")
    kl = a.size
    dr = b.real - a.real
    di = b.imag - a.imag
    return float((dr * dr).sum() / kl + (di * di).sum() / kl)


def approximation_mse(enhanced: np.ndarray, clean: np.ndarray) -> np.ndarray:
    """Per-frequency mean (over frames) of the squared RI error."""
    enhanced = np.asarray(enhanced)
    clean = np.asarray(clean)
    if enhanced.shape != clean.shape:
        raise EngineError(f"shape mismatch: {enhanced.shape} vs {clean.shape}")
    d = enhanced - clean
    return ((d.real ** 2 + d.imag ** 2).sum(axis=0) / enhanced.shape[0]).astype(np.float64)


# -- per-order dumps ------------------------------------------------------

def write_order_dump(path, term: np.ndarray, q: int) -> None:
    """Little-endian float32 magnitude matrix with a 16-byte header
    (magic, T, F, q) for offline inspection."""
    mag = np.abs(np.asarray(term)).astype("<f4")
    with open(path, "wb") as f:
        f.write(DUMP_MAGIC)
        f.write(struct.pack("<III", mag.shape[0], mag.shape[1], q))
        f.write(mag.tobytes())


def read_order_dump(path) -> tuple[np.ndarray, int]:
    with open(path, "rb") as f:
        head = f.read(16)
        if head[:4] != DUMP_MAGIC:
            raise EngineError(f"{path}: not an order dump")
        t, fbins, q = struct.unpack("<III", head[4:])
        mag = np.frombuffer(f.read(4 * t * fbins), dtype="<f4").reshape(t, fbins)
    return mag.astype(np.float64), q


def dump_orders(output: TaylorOutput, directory) -> list[str]:
    import os
    os.makedirs(directory, exist_ok=True)
    paths = []
    for ot in output.orders:
        p = os.path.join(directory, f"order_{ot.q:02d}.bin")
        write_order_dump(p, ot.term, ot.q)
        paths.append(p)
    return paths
