"""Toy-scale training harness and numerical parity oracle for the taer
engine, talking to it only through the archive format, WAV files, and
the command line."""

from .loss import compress, ri_mag_loss
from .models import build_model, export_archive, import_archive
from .parity import parity_check
from .train import TrainConfig, train_toy

__all__ = ["TrainConfig", "build_model", "compress", "export_archive",
           "import_archive", "parity_check", "ri_mag_loss", "train_toy"]
