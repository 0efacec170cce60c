"""Toy-scale training loop: synthetic pairs, Adam with halve-on-plateau,
per-epoch validation loss and SI-SNR, archive export, CSV metrics."""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass

import numpy as np
import torch

from . import dsp
from .data import make_pairs, si_snr_db
from .loss import ri_mag_loss
from .models import build_model, export_archive


@dataclass
class TrainConfig:
    variant: str = "taerlite"
    order: int = 1
    channels: int = 1
    lr: float = 5e-4
    batch: int = 4
    epochs: int = 5
    beta: float = 0.5
    snr_lo: float = -5.0
    snr_hi: float = 0.0
    n_train: int = 160
    n_val: int = 24
    seconds: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.beta <= 1.0):
            raise ValueError(f"beta must be in (0, 1], got {self.beta}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")


def _to_specs(waves: np.ndarray) -> torch.Tensor:
    """(N, samples) -> (N, 1, T, F) complex64 (mono corpus)."""
    x = torch.from_numpy(waves.astype(np.float32))
    return dsp.stft(x).to(torch.complex64).unsqueeze(1)


class Trainer:
    def __init__(self, cfg: TrainConfig):
        if cfg.channels != 1:
            raise ValueError("toy corpus is mono; channels must be 1")
        self.cfg = cfg
        torch.manual_seed(cfg.seed)
        self.model = build_model(cfg.variant, cfg.order, cfg.channels)
        noisy, clean = make_pairs(cfg.n_train + cfg.n_val, cfg.seconds,
                                  cfg.snr_lo, cfg.snr_hi, cfg.seed + 1)
        self.train_noisy = _to_specs(noisy[: cfg.n_train])
        self.train_clean = _to_specs(clean[: cfg.n_train])[:, 0]
        self.val_noisy = _to_specs(noisy[cfg.n_train :])
        self.val_clean = _to_specs(clean[cfg.n_train :])[:, 0]
        self.val_clean_wave = clean[cfg.n_train :]
        self.optimizer = torch.optim.Adam(self.model.parameters(), lr=cfg.lr)
        self.history: list[dict] = []

    def _epoch(self, rng: np.random.Generator) -> float:
        cfg = self.cfg
        order = rng.permutation(cfg.n_train)
        total, batches = 0.0, 0
        self.model.train()
        for i in range(0, cfg.n_train, cfg.batch):
            idx = order[i : i + cfg.batch]
            out = self.model(self.train_noisy[idx])
            loss = ri_mag_loss(out["final"], self.train_clean[idx], cfg.beta)
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"training diverged: non-finite loss at batch {batches} "
                    f"(lr={self.optimizer.param_groups[0]['lr']:.2e})")
            self.optimizer.zero_grad()
            loss.backward()
            self.optimizer.step()
            total += float(loss.detach())
            batches += 1
        return total / batches

    @torch.no_grad()
    def validate(self) -> tuple[float, float]:
        cfg = self.cfg
        self.model.eval()
        losses, snrs = [], []
        for i in range(0, self.val_noisy.shape[0], cfg.batch):
            out = self.model(self.val_noisy[i : i + cfg.batch])
            losses.append(float(ri_mag_loss(out["final"],
                                            self.val_clean[i : i + cfg.batch],
                                            cfg.beta)))
            for j in range(out["final"].shape[0]):
                est = dsp.istft(out["final"][j].numpy().astype(np.complex128))
                ref = self.val_clean_wave[i + j]
                edge = dsp.WIN_LEN  # skip the cold-start taper
                snrs.append(si_snr_db(est[edge:-edge], ref[edge : est.shape[0] - edge]))
        return float(np.mean(losses)), float(np.mean(snrs))

    def fit(self) -> dict:
        cfg = self.cfg
        rng = np.random.default_rng(cfg.seed + 2)
        val_loss0, val_snr0 = self.validate()
        self.history.append({"epoch": 0, "train_loss": "",
                             "val_loss": val_loss0, "val_si_snr": val_snr0})
        best = float("inf")
        stagnant = 0
        for epoch in range(1, cfg.epochs + 1):
            train_loss = self._epoch(rng)
            if train_loss < best - 1e-12:
                best = train_loss
                stagnant = 0
            else:
                stagnant += 1
                if stagnant >= 2:  # halve after two non-improving epochs
                    for group in self.optimizer.param_groups:
                        group["lr"] *= 0.5
                    stagnant = 0
            val_loss, val_snr = self.validate()
            self.history.append({"epoch": epoch, "train_loss": train_loss,
                                 "val_loss": val_loss, "val_si_snr": val_snr})
        return {"init_val_loss": val_loss0, "final_val_loss": val_loss,
                "init_val_si_snr": val_snr0, "final_val_si_snr": val_snr}

    def export(self, path) -> None:
        export_archive(self.model, path)

    def write_metrics(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=["epoch", "train_loss", "val_loss",
                                              "val_si_snr"])
            w.writeheader()
            for row in self.history:
                w.writerow(row)


def train_toy(cfg: TrainConfig, archive_path, metrics_path=None) -> dict:
    trainer = Trainer(cfg)
    summary = trainer.fit()
    trainer.export(archive_path)
    if metrics_path:
        trainer.write_metrics(metrics_path)
    return summary


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="taer-train",
                                 description="toy trainer for the taer engine")
    ap.add_argument("--variant", choices=["taer", "taerlite"], default="taerlite")
    ap.add_argument("--order", type=int, default=1)
    ap.add_argument("--epochs", type=int, default=5)
    ap.add_argument("--batch", type=int, default=4)
    ap.add_argument("--lr", type=float, default=5e-4)
    ap.add_argument("--n-train", type=int, default=160)
    ap.add_argument("--n-val", type=int, default=24)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", required=True, help="archive output path")
    ap.add_argument("--metrics", default=None, help="CSV metrics path")
    args = ap.parse_args(argv)
    cfg = TrainConfig(variant=args.variant, order=args.order, epochs=args.epochs,
                      batch=args.batch, lr=args.lr, n_train=args.n_train,
                      n_val=args.n_val, seed=args.seed)
    summary = train_toy(cfg, args.out, args.metrics)
    print(f"val loss {summary['init_val_loss']:.4f} -> {summary['final_val_loss']:.4f}; "
          f"val SI-SNR {summary['init_val_si_snr']:.2f} -> "
          f"{summary['final_val_si_snr']:.2f} dB; wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
