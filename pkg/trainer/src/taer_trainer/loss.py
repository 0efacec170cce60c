"""Compressed-spectrum RI loss with magnitude constraint.

Both spectra are power-compressed preserving phase, s_c = |s|^beta *
exp(j angle(s)), then the loss is the per-bin mean of the squared RI
gap plus the per-bin mean of the squared magnitude gap, equally
weighted.  Supervision is applied only to the final superimposed
estimate.
"""

from __future__ import annotations

import torch

COMPRESS_EPS = 1e-12


def compress(spec: torch.Tensor, beta: float) -> torch.Tensor:
    """|s|^beta * e^{j angle(s)}, differentiable at the origin via a tiny
    magnitude floor."""
    mag2 = spec.real ** 2 + spec.imag ** 2
    return spec * (mag2 + COMPRESS_EPS) ** ((beta - 1.0) / 2.0)


def ri_mag_loss(estimate: torch.Tensor, target: torch.Tensor,
                beta: float = 0.5) -> torch.Tensor:
    if estimate.shape != target.shape:
        raise ValueError(f"shape mismatch: {estimate.shape} vs {target.shape}")
    ec = compress(estimate, beta)
    tc = compress(target, beta)
    l_ri = ((ec.real - tc.real) ** 2 + (ec.imag - tc.imag) ** 2).mean()
    l_mag = ((ec.abs() - tc.abs()) ** 2).mean()
    return l_ri + l_mag
