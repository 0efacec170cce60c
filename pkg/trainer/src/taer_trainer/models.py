"""Trainable TaEr / TaErLite models.

Structure, tensor names, and numerics mirror the engine graphs so that
an exported archive drives the engine to the same outputs: 0th-order
gain on the reference channel, then Q recursive correction modules
H(q) = (q-1) H(q-1) + P(q-1, H, R), superimposed with 1/q! weights
(TaErLite adds a frame-level post-filter gain after superimposition).
"""

from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn

from .dsp import NUM_BINS, erb_matrices
from .modules import (
    Cln, Conv1dCausal, Conv2dCausal, Deconv2dCausal, Glu2d, GruGrouped, Linear,
    LstmSeq, PRelu, Stcn, collect_tensors, shuffle_groups,
)
from . import tayw

FREQ_CHAIN = (161, 80, 39, 19, 9, 4)
ENC_DEPTHS = (4, 3, 2, 1, 0)
DEC_DEPTHS = (1, 2, 3, 4, 0)


def _down_freq(f):
    return (f - 3) // 2 + 1


class ConvSet(nn.Module):
    """Convolution (plain/GLU/transposed-GLU) + cLN + PReLU."""

    def __init__(self, ename, in_ch, out_ch, kernel, stride,
                 kind="glu", in_freq=0, out_freq=0):
        super().__init__()
        if kind == "conv":
            self.conv = Conv2dCausal(ename, in_ch, out_ch, kernel, stride)
        elif kind == "glu":
            self.conv = Glu2d(ename, in_ch, out_ch, kernel, stride)
        else:
            self.conv = Glu2d(ename, in_ch, out_ch, kernel, stride,
                              in_freq=in_freq, out_freq=out_freq, transposed=True)
        self.cln = Cln(f"{ename}.cln", out_ch)
        self.prelu = PRelu(f"{ename}.prelu", out_ch, axis=1)

    def forward(self, x):
        return self.prelu(self.cln(self.conv(x)))


class UNetBlock(nn.Module):
    """Residual depth-U block: down convs k=(2,3) s=(1,2), mirrored
    transposed convs with skip concatenation, residual add."""

    def __init__(self, ename, depth, freq, ch=64):
        super().__init__()
        self.depth = depth
        freqs = [freq]
        for _ in range(depth):
            freqs.append(_down_freq(freqs[-1]))
        self.downs = nn.ModuleList(
            [ConvSet(f"{ename}/down{j + 1}", ch, ch, (2, 3), 2, kind="conv")
             for j in range(depth)])
        self.ups = nn.ModuleList()
        for j in range(depth):
            up = nn.Module()
            up.conv = Deconv2dCausal(f"{ename}/up{j + 1}", 2 * ch, ch, (2, 3), 2,
                                     freqs[depth - j], freqs[depth - j - 1])
            up.cln = Cln(f"{ename}/up{j + 1}.cln", ch)
            up.prelu = PRelu(f"{ename}/up{j + 1}.prelu", ch, axis=1)
            self.ups.append(up)

    def forward(self, x):
        res = x
        skips = []
        for down in self.downs:
            x = down(x)
            skips.append(x)
        for up in self.ups:
            x = torch.cat([x, skips.pop()], dim=1)
            x = up.prelu(up.cln(up.conv(x)))
        return x + res


class SurrogateTaEr(nn.Module):
    def __init__(self, q, in_dim):
        super().__init__()
        p = f"surrogate{q}"
        self.inp = Conv1dCausal(f"{p}/in", in_dim, 256, 1)
        self.in_prelu = PRelu(f"{p}/in.prelu", 256, axis=1)
        self.in_cln = Cln(f"{p}/in.cln", 256)
        self.stcn = Stcn(p)
        self.lstm = LstmSeq(f"{p}/lstm", 256, 256)
        self.head_r = Linear(f"{p}/head_r", 256, NUM_BINS)
        self.head_i = Linear(f"{p}/head_i", 256, NUM_BINS)

    def forward(self, feat):  # (B, T, in_dim)
        z = self.inp(feat.transpose(1, 2))
        z = self.in_prelu(z)
        z = self.in_cln(z.transpose(1, 2)).transpose(1, 2)
        z = self.stcn(z).transpose(1, 2)  # (B, T, 256)
        z = z + self.lstm(z)
        return self.head_r(z), self.head_i(z)


class SurrogateLite(nn.Module):
    def __init__(self, q, in_dim):
        super().__init__()
        p = f"surrogate{q}"
        self.inp = Conv1dCausal(f"{p}/in", in_dim, 256, 1)
        self.in_prelu = PRelu(f"{p}/in.prelu", 256, axis=1)
        self.in_cln = Cln(f"{p}/in.cln", 256)
        self.gru1 = GruGrouped(f"{p}/gru1", 256, 256, 2)
        self.gru2 = GruGrouped(f"{p}/gru2", 256, 256, 2)
        self.head_r = Linear(f"{p}/head_r", 256, NUM_BINS)
        self.head_i = Linear(f"{p}/head_i", 256, NUM_BINS)

    def forward(self, feat):
        z = self.inp(feat.transpose(1, 2))
        z = self.in_prelu(z)
        z = self.in_cln(z.transpose(1, 2))  # (B, T, 256)
        z = self.gru2(shuffle_groups(self.gru1(z), 2))
        return self.head_r(z), self.head_i(z)


def _planes(spec):
    """(B, M, T, F) complex -> (B, 2M, T, F) with per-channel RI pairs."""
    b, m, t, f = spec.shape
    out = spec.new_zeros((b, 2 * m, t, f), dtype=spec.real.dtype)
    out[:, 0::2] = spec.real
    out[:, 1::2] = spec.imag
    return out


def _superimpose(orders):
    acc = torch.zeros_like(orders[0])
    for q, term in enumerate(orders):
        acc = acc + term / math.factorial(q)
    return acc


class TaErTorch(nn.Module):
    variant = "taer"

    def __init__(self, order: int, channels: int = 1):
        super().__init__()
        self.order, self.channels = order, channels
        self.rels = nn.ModuleList()
        in_ch = 2 * channels
        for i in range(5):
            rel = nn.Module()
            rel.conv = ConvSet(f"zeroth/rel{i + 1}/glu",
                               in_ch if i == 0 else 64, 64, (1, 3), 2)
            rel.ub = UNetBlock(f"zeroth/rel{i + 1}/ub", ENC_DEPTHS[i],
                               FREQ_CHAIN[i + 1]) if ENC_DEPTHS[i] else None
            self.rels.append(rel)
        self.stcn = Stcn("zeroth")
        dec_chain = tuple(reversed(FREQ_CHAIN))
        self.rdls = nn.ModuleList()
        for j in range(5):
            rdl = nn.Module()
            rdl.conv = ConvSet(f"zeroth/rdl{j + 1}/deglu", 128, 64, (1, 3), 2,
                               kind="deglu", in_freq=dec_chain[j],
                               out_freq=dec_chain[j + 1])
            rdl.ub = UNetBlock(f"zeroth/rdl{j + 1}/ub", DEC_DEPTHS[j],
                               dec_chain[j + 1]) if DEC_DEPTHS[j] else None
            self.rdls.append(rdl)
        self.gain = Conv2dCausal("zeroth/gain", 64, 1, (1, 1), 1)
        self.surrogates = nn.ModuleList(
            [SurrogateTaEr(q + 1, 2 * NUM_BINS + 256) for q in range(order)])

    def forward(self, spec):  # (B, M, T, F) complex
        h = _planes(spec)
        b, _, t, _ = h.shape
        skips = []
        for rel in self.rels:
            h = rel.conv(h)
            if rel.ub is not None:
                h = rel.ub(h)
            skips.append(h)
        flat = h.permute(0, 2, 1, 3).reshape(b, t, 256)
        r_feat = flat
        z = self.stcn(flat.transpose(1, 2))
        h = z.transpose(1, 2).reshape(b, t, 64, 4).permute(0, 2, 1, 3)
        for rdl in self.rdls:
            h = torch.cat([h, skips.pop()], dim=1)
            h = rdl.conv(h)
            if rdl.ub is not None:
                h = rdl.ub(h)
        gain = torch.sigmoid(self.gain(h))[:, 0]  # (B, T, F)
        ref = spec[:, 0]
        term = gain * ref
        orders = [term]
        for q, surr in enumerate(self.surrogates, start=1):
            feat = torch.cat([term.real, term.imag, r_feat], dim=2)
            p_r, p_i = surr(feat)
            term = (q - 1) * term + torch.complex(p_r, p_i)
            orders.append(term)
        enhanced = _superimpose(orders)
        return {"orders": orders, "enhanced": enhanced, "final": enhanced}


class TaErLiteTorch(nn.Module):
    variant = "taerlite"

    def __init__(self, order: int, channels: int = 1, erb_bands: int = 32):
        super().__init__()
        self.order, self.channels = order, channels
        fwd, inv = erb_matrices(erb_bands)
        self.register_buffer("erb_fwd", torch.from_numpy(fwd))
        self.register_buffer("erb_inv", torch.from_numpy(inv))
        self.gru1 = GruGrouped("zeroth/gru1", erb_bands * channels, 128, 2)
        self.gru2 = GruGrouped("zeroth/gru2", 128, 128, 2)
        self.out = Linear("zeroth/out", 128, erb_bands)
        enc = []
        in_ch = 2 * channels
        for i in range(5):
            enc.append(ConvSet(f"encoder/glu{i + 1}", in_ch if i == 0 else 32,
                               32, (1, 3), 2))
        self.encoder = nn.ModuleList(enc)
        self.surrogates = nn.ModuleList(
            [SurrogateLite(q + 1, 2 * NUM_BINS + 128) for q in range(order)])
        self.post_gru1 = GruGrouped("post/gru1", erb_bands, 32, 1)
        self.post_gru2 = GruGrouped("post/gru2", 32, 32, 1)
        self.post_out = Linear("post/out", 32, 1)

    def forward(self, spec):  # (B, M, T, F) complex
        b, m, t, _ = spec.shape
        fwd = self.erb_fwd.to(spec.real.dtype)
        inv = self.erb_inv.to(spec.real.dtype)
        bands = (spec.abs() @ fwd.T).permute(0, 2, 1, 3).reshape(b, t, -1)
        g = self.gru2(shuffle_groups(self.gru1(bands), 2))
        band_gain = torch.sigmoid(self.out(g))
        gain = band_gain @ inv.T
        ref = spec[:, 0]
        term = gain * ref

        h = _planes(spec)
        for layer in self.encoder:
            h = layer(h)
        r_feat = h.permute(0, 2, 1, 3).reshape(b, t, 128)

        orders = [term]
        for q, surr in enumerate(self.surrogates, start=1):
            feat = torch.cat([term.real, term.imag, r_feat], dim=2)
            p_r, p_i = surr(feat)
            term = (q - 1) * term + torch.complex(p_r, p_i)
            orders.append(term)
        enhanced = _superimpose(orders)

        pb = enhanced.abs() @ fwd.T
        pf = torch.sigmoid(self.post_out(self.post_gru2(self.post_gru1(pb))))
        final = pf * enhanced
        return {"orders": orders, "enhanced": enhanced, "final": final}


def build_model(variant: str, order: int, channels: int = 1) -> nn.Module:
    if variant == "taer":
        return TaErTorch(order, channels)
    if variant == "taerlite":
        return TaErLiteTorch(order, channels)
    raise ValueError(f"unknown variant {variant!r}")


def export_archive(model: nn.Module, path) -> None:
    tensors = {name: p.detach().cpu().numpy().astype(np.float32)
               for name, p in sorted(collect_tensors(model).items())}
    tayw.write_archive(path, model.variant, model.order, model.channels, tensors)


def import_archive(model: nn.Module, path) -> None:
    variant, order, channels, tensors = tayw.read_archive(path)
    if (variant, order, channels) != (model.variant, model.order, model.channels):
        raise ValueError(f"archive {variant}/Q{order}/M{channels} does not match model")
    own = collect_tensors(model)
    missing = sorted(set(own) - set(tensors))
    extra = sorted(set(tensors) - set(own))
    if missing or extra:
        raise ValueError(f"tensor set mismatch: missing {missing[:3]}, extra {extra[:3]}")
    with torch.no_grad():
        for name, p in own.items():
            p.copy_(torch.from_numpy(tensors[name]))
