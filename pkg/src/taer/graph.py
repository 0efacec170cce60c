"""Declarative model graphs and their per-frame interpreter.

A component (0th-order module, high-order encoder, surrogate trunk,
post-filter) is an ordered tuple of ops: LayerSpec compute steps plus
structural directives (residual save/add, U-Net skip push/pop-concat,
flatten/unflatten, grouped-feature shuffle, named feature taps).
``run_frame`` interprets one frame through a component; all temporal
behavior lives in the per-layer states.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .erb import ErbBank
from .layers import LayerError, LayerSpec, layer_step


@dataclass(frozen=True)
class Save:
    tag: str


@dataclass(frozen=True)
class AddSaved:
    tag: str


@dataclass(frozen=True)
class PushSkip:
    pass


@dataclass(frozen=True)
class PopConcatSkip:
    pass


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Unflatten:
    channels: int
    freq: int


@dataclass(frozen=True)
class Shuffle:
    groups: int


@dataclass(frozen=True)
class Tap:
    tag: str


@dataclass(frozen=True)
class Surrogate:
    trunk: tuple
    head_r: LayerSpec
    head_i: LayerSpec

    def all_ops(self):
        return (*self.trunk, self.head_r, self.head_i)


@dataclass(frozen=True)
class ModelGraph:
    variant: str                 # "taer" | "taerlite"
    order: int                   # number of high-order terms Q
    channels: int                # microphones M
    num_bins: int
    zeroth: tuple
    surrogates: tuple            # Q Surrogate entries
    encoder: tuple = ()          # taerlite only: linear-scale feature extractor
    post_filter: tuple = ()      # taerlite only
    erb: ErbBank | None = None   # taerlite only
    r_dim: int = 0               # width of the shared high-order feature
    erb_bands: int = 0

    def components(self):
        yield "zeroth", self.zeroth
        if self.encoder:
            yield "encoder", self.encoder
        for i, s in enumerate(self.surrogates):
            yield f"surrogate{i + 1}", s.all_ops()
        if self.post_filter:
            yield "post_filter", self.post_filter

    def layer_specs(self):
        for _, ops in self.components():
            for op in ops:
                if isinstance(op, LayerSpec):
                    yield op

    def weight_manifest(self) -> dict[str, tuple[int, ...]]:
        manifest: dict[str, tuple[int, ...]] = {}
        for spec in self.layer_specs():
            for name, shape in spec.weight_shapes().items():
                if name in manifest:
                    raise LayerError(f"duplicate weight name {name}")
                manifest[name] = shape
        return manifest

    def count_params(self) -> int:
        return sum(spec.param_count() for spec in self.layer_specs())

    def count_macs_per_frame(self) -> int:
        return sum(spec.macs_per_frame() for spec in self.layer_specs())

    def make_state(self) -> dict:
        return {spec.name: spec.init_state() for spec in self.layer_specs()}

    def describe(self) -> list[dict]:
        """Per-layer table: params, MACs/frame, direct time lookback."""
        rows = []
        for comp, ops in self.components():
            for op in ops:
                if isinstance(op, LayerSpec):
                    rows.append({
                        "component": comp,
                        "layer": op.name,
                        "kind": op.kind,
                        "params": op.param_count(),
                        "macs_per_frame": op.macs_per_frame(),
                        "lookback_frames": op.lookback(),
                        "recurrent": op.is_recurrent,
                    })
        return rows

    def describe_text(self) -> str:
        rows = self.describe()
        widths = (46, 12, 10, 14, 9)
        head = ("layer", "kind", "params", "macs/frame", "lookback")
        lines = ["  ".join(h.ljust(w) for h, w in zip(head, widths))]
        for r in rows:
            lines.append("  ".join([
                r["layer"].ljust(widths[0]),
                r["kind"].ljust(widths[1]),
                str(r["params"]).rjust(widths[2]),
                str(r["macs_per_frame"]).rjust(widths[3]),
                str(r["lookback_frames"]).rjust(widths[4]),
            ]))
        lines.append(
            f"total params: {self.count_params()}   "
            f"total MACs/frame: {self.count_macs_per_frame()}"
        )
        return "\n".join(lines)

    def describe_json(self) -> str:
        return json.dumps({
            "variant": self.variant,
            "order": self.order,
            "channels": self.channels,
            "params": self.count_params(),
            "macs_per_frame": self.count_macs_per_frame(),
            "layers": self.describe(),
        }, indent=2)


def run_frame(ops, weights: dict, x: np.ndarray, state: dict,
              taps: dict | None = None) -> np.ndarray:
    """Advance one frame through a component's op list."""
    skips: list[np.ndarray] = []
    saved: dict[str, np.ndarray] = {}
    for op in ops:
        if isinstance(op, LayerSpec):
            x = layer_step(op, weights, x, state[op.name])
        elif isinstance(op, Save):
            saved[op.tag] = x
        elif isinstance(op, AddSaved):
            x = x + saved[op.tag]
        elif isinstance(op, PushSkip):
            skips.append(x)
        elif isinstance(op, PopConcatSkip):
            x = np.concatenate([x, skips.pop()], axis=0)
        elif isinstance(op, Flatten):
            x = x.reshape(-1)
        elif isinstance(op, Unflatten):
            x = x.reshape(op.channels, op.freq)
        elif isinstance(op, Shuffle):
            x = x.reshape(op.groups, -1).T.reshape(-1)
        elif isinstance(op, Tap):
            if taps is not None:
                taps[op.tag] = x
        else:
            raise LayerError(f"unknown op {op!r}")
    if skips:
        raise LayerError("unbalanced skip stack in component")
    return x


def path_lookback(ops) -> int:
    """Total feedforward time lookback along an op list."""
    return sum(op.lookback() for op in ops if isinstance(op, LayerSpec))


def path_has_recurrence(ops) -> bool:
    return any(op.is_recurrent for op in ops if isinstance(op, LayerSpec))
