"""Batched torch layers mirroring the engine's streaming semantics.

Parameters are stored in the engine's tensor layouts (and under the
engine's archive names via ``ename``) so export needs no reshaping:
conv weights (out, in, k_t, k_f) with time index 0 the oldest tap and
zero history at the stream start; GRU/LSTM gate stacks with one combined
bias; cumulative layer norm over all elements of frames up to t.
Feature tensors are (B, C, T, F) for 2-D layers and (B, T, D) for 1-D
layers ((B, D, T) inside temporal convolutions).
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

CLN_EPS = 1e-8


def _mat(shape, fan_in):
    return nn.Parameter(torch.randn(shape) / math.sqrt(fan_in))


class EngineModule(nn.Module):
    """Base: engine name plus the tensors it owns under archive names."""

    def __init__(self, ename: str):
        super().__init__()
        self.ename = ename

    def engine_tensors(self) -> dict[str, nn.Parameter]:
        return {}


class Conv2dCausal(EngineModule):
    def __init__(self, ename, in_ch, out_ch, kernel, stride):
        super().__init__(ename)
        kt, kf = kernel
        self.stride = stride
        self.kt = kt
        self.w = _mat((out_ch, in_ch, kt, kf), in_ch * kt * kf)
        self.b = nn.Parameter(torch.zeros(out_ch))

    def engine_tensors(self):
        return {f"{self.ename}.w": self.w, f"{self.ename}.b": self.b}

    def forward(self, x):  # (B, C, T, F)
        if self.kt > 1:
            x = F.pad(x, (0, 0, self.kt - 1, 0))
        return F.conv2d(x, self.w, self.b, stride=(1, self.stride))


class Deconv2dCausal(EngineModule):
    """Transposed along frequency only; causal taps along time."""

    def __init__(self, ename, in_ch, out_ch, kernel, stride, in_freq, out_freq):
        super().__init__(ename)
        kt, kf = kernel
        self.kt, self.kf, self.stride = kt, kf, stride
        self.opad = out_freq - ((in_freq - 1) * stride + kf)
        self.w = _mat((out_ch, in_ch, kt, kf), in_ch * kt * kf)
        self.b = nn.Parameter(torch.zeros(out_ch))

    def engine_tensors(self):
        return {f"{self.ename}.w": self.w, f"{self.ename}.b": self.b}

    def forward(self, x):  # (B, C, T, F)
        t_len = x.shape[2]
        padded = F.pad(x, (0, 0, self.kt - 1, 0))
        out = None
        for tau in range(self.kt):
            shifted = padded[:, :, tau : tau + t_len]
            w_t = self.w[:, :, tau, :].transpose(0, 1).unsqueeze(2)  # (in, out, 1, kf)
            part = F.conv_transpose2d(shifted, w_t, stride=(1, self.stride),
                                      output_padding=(0, self.opad))
            out = part if out is None else out + part
        return out + self.b.view(1, -1, 1, 1)


class Glu2d(EngineModule):
    def __init__(self, ename, in_ch, out_ch, kernel, stride,
                 in_freq=0, out_freq=0, transposed=False):
        super().__init__(ename)
        conv = (lambda n: Deconv2dCausal(n, in_ch, out_ch, kernel, stride,
                                         in_freq, out_freq)) if transposed \
            else (lambda n: Conv2dCausal(n, in_ch, out_ch, kernel, stride))
        self.a = conv(f"{ename}.a")
        self.g = conv(f"{ename}.b")

    def forward(self, x):
        return self.a(x) * torch.sigmoid(self.g(x))


class Cln(EngineModule):
    """Cumulative layer norm: stats over all elements of frames 1..t."""

    def __init__(self, ename, dim):
        super().__init__(ename)
        self.gain = nn.Parameter(torch.ones(dim))
        self.bias = nn.Parameter(torch.zeros(dim))

    def engine_tensors(self):
        return {f"{self.ename}.gain": self.gain, f"{self.ename}.bias": self.bias}

    def forward(self, x):
        if x.dim() == 4:  # (B, C, T, F): stats over (C, F)
            t_len = x.shape[2]
            per = x.shape[1] * x.shape[3]
            s = x.sum(dim=(1, 3))
            ss = (x * x).sum(dim=(1, 3))
            shape = (1, -1, 1)
            affine = (self.gain.view(1, -1, 1, 1), self.bias.view(1, -1, 1, 1))
            expand = lambda v: v.view(v.shape[0], 1, t_len, 1)
        else:  # (B, T, D): stats over D
            t_len = x.shape[1]
            per = x.shape[2]
            s = x.sum(dim=2)
            ss = (x * x).sum(dim=2)
            affine = (self.gain.view(1, 1, -1), self.bias.view(1, 1, -1))
            expand = lambda v: v.view(v.shape[0], t_len, 1)
        count = torch.arange(1, t_len + 1, dtype=x.dtype, device=x.device) * per
        mean = torch.cumsum(s, dim=1) / count
        var = torch.clamp(torch.cumsum(ss, dim=1) / count - mean * mean, min=0.0)
        norm = (x - expand(mean)) / torch.sqrt(expand(var) + CLN_EPS)
        return norm * affine[0] + affine[1]


class PRelu(EngineModule):
    """Per-channel slope; `axis` names the channel axis of the input."""

    def __init__(self, ename, dim, axis):
        super().__init__(ename)
        self.slope = nn.Parameter(torch.full((dim,), 0.25))
        self.axis = axis

    def engine_tensors(self):
        return {f"{self.ename}.slope": self.slope}

    def forward(self, x):
        shape = [1] * x.dim()
        shape[self.axis] = -1
        a = self.slope.view(shape)
        return torch.where(x >= 0, x, a * x)


class Conv1dCausal(EngineModule):
    def __init__(self, ename, in_ch, out_ch, kernel, dilation=1):
        super().__init__(ename)
        self.kernel, self.dilation = kernel, dilation
        self.w = _mat((out_ch, in_ch, kernel), in_ch * kernel)
        self.b = nn.Parameter(torch.zeros(out_ch))

    def engine_tensors(self):
        return {f"{self.ename}.w": self.w, f"{self.ename}.b": self.b}

    def forward(self, x):  # (B, D, T)
        pad = (self.kernel - 1) * self.dilation
        if pad:
            x = F.pad(x, (pad, 0))
        return F.conv1d(x, self.w, self.b, dilation=self.dilation)


class Linear(EngineModule):
    def __init__(self, ename, in_dim, out_dim):
        super().__init__(ename)
        self.w = _mat((out_dim, in_dim), in_dim)
        self.b = nn.Parameter(torch.zeros(out_dim))

    def engine_tensors(self):
        return {f"{self.ename}.w": self.w, f"{self.ename}.b": self.b}

    def forward(self, x):  # (B, T, D)
        return x @ self.w.T + self.b


class GruGrouped(EngineModule):
    """Grouped GRU, single combined bias per gate stack:
    z = sig(Wz x + Uz h + bz), r likewise, n = tanh(Wn x + r*(Un h) + bn),
    h' = (1-z)*n + z*h."""

    def __init__(self, ename, in_dim, hidden, groups):
        super().__init__(ename)
        self.groups = groups
        self.ig, self.hg = in_dim // groups, hidden // groups
        self.w = nn.ParameterList([_mat((3 * self.hg, self.ig), self.ig)
                                   for _ in range(groups)])
        self.u = nn.ParameterList([_mat((3 * self.hg, self.hg), self.hg)
                                   for _ in range(groups)])
        self.b = nn.ParameterList([nn.Parameter(torch.zeros(3 * self.hg))
                                   for _ in range(groups)])

    def engine_tensors(self):
        out = {}
        for g in range(self.groups):
            out[f"{self.ename}.g{g}.w"] = self.w[g]
            out[f"{self.ename}.g{g}.u"] = self.u[g]
            out[f"{self.ename}.g{g}.b"] = self.b[g]
        return out

    def forward(self, x):  # (B, T, D_in) -> (B, T, hidden)
        outs = []
        for g in range(self.groups):
            xg = x[:, :, g * self.ig : (g + 1) * self.ig]
            pre = xg @ self.w[g].T + self.b[g]  # (B, T, 3hg), all frames at once
            h = x.new_zeros(x.shape[0], self.hg)
            hs = []
            for t in range(x.shape[1]):
                uh = h @ self.u[g].T
                zx, rx, nx = pre[:, t].chunk(3, dim=1)
                zh, rh, nh = uh.chunk(3, dim=1)
                z = torch.sigmoid(zx + zh)
                r = torch.sigmoid(rx + rh)
                n = torch.tanh(nx + r * nh)
                h = (1 - z) * n + z * h
                hs.append(h)
            outs.append(torch.stack(hs, dim=1))
        return torch.cat(outs, dim=2)


class LstmSeq(EngineModule):
    """LSTM with gate order (i, f, g, o) and a single combined bias."""

    def __init__(self, ename, in_dim, hidden):
        super().__init__(ename)
        self.hidden = hidden
        self.w = _mat((4 * hidden, in_dim), in_dim)
        self.u = _mat((4 * hidden, hidden), hidden)
        self.b = nn.Parameter(torch.zeros(4 * hidden))

    def engine_tensors(self):
        return {f"{self.ename}.w": self.w, f"{self.ename}.u": self.u,
                f"{self.ename}.b": self.b}

    def forward(self, x):  # (B, T, D)
        pre = x @ self.w.T + self.b
        h = x.new_zeros(x.shape[0], self.hidden)
        c = x.new_zeros(x.shape[0], self.hidden)
        hs = []
        for t in range(x.shape[1]):
            gates = pre[:, t] + h @ self.u.T
            i, f, g, o = gates.chunk(4, dim=1)
            c = torch.sigmoid(f) * c + torch.sigmoid(i) * torch.tanh(g)
            h = torch.sigmoid(o) * torch.tanh(c)
            hs.append(h)
        return torch.stack(hs, dim=1)


def shuffle_groups(x, groups):
    """(B, T, D): interleave features across groups, matching the engine's
    reshape(g, -1).T.reshape(-1)."""
    b, t, d = x.shape
    return x.view(b, t, groups, d // groups).transpose(2, 3).reshape(b, t, d)


class Stcm(EngineModule):
    """Squeezed temporal conv module on (B, D, T) with residual add."""

    def __init__(self, ename, dilation, dim=256, hidden=64):
        super().__init__(ename)
        self.inp = Conv1dCausal(f"{ename}/in", dim, hidden, 1)
        self.in_prelu = PRelu(f"{ename}/in.prelu", hidden, axis=1)
        self.in_cln = Cln(f"{ename}/in.cln", hidden)
        self.dil = Conv1dCausal(f"{ename}/dil", hidden, hidden, 5, dilation)
        self.dil_prelu = PRelu(f"{ename}/dil.prelu", hidden, axis=1)
        self.dil_cln = Cln(f"{ename}/dil.cln", hidden)
        self.out = Conv1dCausal(f"{ename}/out", hidden, dim, 1)

    def _cln_on_channels(self, cln, x):
        # x is (B, D, T); Cln's 1-D path expects (B, T, D)
        return cln(x.transpose(1, 2)).transpose(1, 2)

    def forward(self, x):
        y = self.inp(x)
        y = self._cln_on_channels(self.in_cln, self.in_prelu(y))
        y = self.dil(y)
        y = self._cln_on_channels(self.dil_cln, self.dil_prelu(y))
        return x + self.out(y)


class Stcn(EngineModule):
    def __init__(self, ename, dim=256, groups=2, dilations=(1, 2, 5, 9)):
        super().__init__(ename)
        self.mods = nn.ModuleList(
            [Stcm(f"{ename}/stcn{g + 1}/tcm{i + 1}", d, dim=dim)
             for g in range(groups) for i, d in enumerate(dilations)])

    def forward(self, x):
        for m in self.mods:
            x = m(x)
        return x


def collect_tensors(module: nn.Module) -> dict[str, nn.Parameter]:
    out: dict[str, nn.Parameter] = {}
    for m in module.modules():
        if isinstance(m, EngineModule):
            for name, p in m.engine_tensors().items():
                if name in out and out[name] is not p:
                    raise ValueError(f"duplicate engine tensor {name}")
                out[name] = p
    return out
