"""Cross-implementation parity: trainer forward vs the engine binary.

The engine is exercised only through its external surfaces: the archive
file, WAV files, the CLI, and the per-order dump format.  Divergence is
localized to the first differing component (order term or final
estimate).
"""

from __future__ import annotations

import struct
import subprocess
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from scipy.io import wavfile

from . import dsp, tayw
from .models import build_model, import_archive

ENGINE_CMD = [sys.executable, "-m", "taer.cli"]


def run_engine(args: list[str]) -> None:
    proc = subprocess.run(ENGINE_CMD + args, capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(f"engine failed: {proc.stderr.strip()}")


def read_order_dump(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != b"TAYD":
        raise ValueError(f"{path}: not an order dump")
    t, f, _ = struct.unpack("<III", raw[4:16])
    return np.frombuffer(raw[16:], dtype="<f4").reshape(t, f).astype(np.float64)


@dataclass
class ParityReport:
    max_abs: float = 0.0
    per_utterance: list[dict] = field(default_factory=list)
    first_divergence: str | None = None

    def ok(self, tol: float = 1e-4) -> bool:
        return self.max_abs <= tol


def _pad_for_frames(x: np.ndarray) -> np.ndarray:
    """Pad with zeros exactly like the engine's tail flush."""
    n = x.shape[-1]
    frames = -(-n // dsp.HOP)
    need = (frames - 1) * dsp.HOP + dsp.WIN_LEN
    return np.pad(x, [(0, 0)] * (x.ndim - 1) + [(0, need - n)])


def parity_check(archive_path, n_utts: int = 10, seconds: float = 0.5,
                 seed: int = 0, tol: float = 1e-4,
                 reference_archive=None) -> ParityReport:
    """Compare engine output on `archive_path` against the trainer's own
    forward; the trainer loads `reference_archive` when given (fault-
    injection checks hand the engine a perturbed copy)."""
    if seconds <= 0:
        raise ValueError("utterances must be non-empty")
    variant, order, channels, _ = tayw.read_archive(archive_path)
    model = build_model(variant, order, channels).double()
    import_archive(model, reference_archive or archive_path)
    model.eval()

    rng = np.random.default_rng(seed)
    n = int(seconds * dsp.SAMPLE_RATE)
    report = ParityReport()
    with tempfile.TemporaryDirectory() as td:
        td = Path(td)
        for u in range(n_utts):
            x = rng.uniform(-0.4, 0.4, (channels, n)).astype(np.float32)
            wav_in = td / f"in{u}.wav"
            wavfile.write(wav_in, dsp.SAMPLE_RATE, x[0] if channels == 1 else x.T)
            wav_out = td / f"out{u}.wav"
            dump_dir = td / f"orders{u}"
            run_engine(["enhance", "--model", str(archive_path),
                        "--input", str(wav_in), "--output", str(wav_out),
                        "--dump-orders", str(dump_dir)])

            _, y_engine = wavfile.read(wav_out)
            y_engine = np.asarray(y_engine, dtype=np.float64)

            padded = _pad_for_frames(x.astype(np.float64))
            spec = dsp.stft(torch.from_numpy(padded)).unsqueeze(0)  # (1, M, T, F)
            with torch.no_grad():
                out = model(spec)
            y_ref = dsp.istft(out["final"][0].numpy())[:n]

            utt = {"utterance": u}
            divergent = None
            for q in range(order + 1):
                mag_engine = read_order_dump(dump_dir / f"order_{q:02d}.bin")
                mag_ref = np.abs(out["orders"][q][0].numpy())
                d = float(np.max(np.abs(mag_engine - mag_ref)))
                utt[f"order{q}"] = d
                if d > tol and divergent is None:
                    divergent = f"order{q}"
            d_final = float(np.max(np.abs(y_engine - y_ref)))
            utt["final"] = d_final
            if d_final > tol and divergent is None:
                divergent = "final"
            utt_max = max(v for k, v in utt.items() if k != "utterance")
            report.max_abs = max(report.max_abs, utt_max)
            if divergent and report.first_divergence is None:
                report.first_divergence = divergent
            report.per_utterance.append(utt)
    return report


def main(argv=None) -> int:
    import argparse

    ap = argparse.ArgumentParser(description="engine/trainer parity check")
    ap.add_argument("--archive", required=True)
    ap.add_argument("--utterances", type=int, default=10)
    ap.add_argument("--seconds", type=float, default=0.5)
    ap.add_argument("--tol", type=float, default=1e-4)
    args = ap.parse_args(argv)
    report = parity_check(args.archive, args.utterances, args.seconds, tol=args.tol)
    status = "PASS" if report.ok(args.tol) else f"FAIL at {report.first_divergence}"
    print(f"parity max-abs {report.max_abs:.3e} over {args.utterances} utterances: "
          f"{status}")
    return 0 if report.ok(args.tol) else 1


if __name__ == "__main__":
    sys.exit(main())
