"""Training and export companion for the DPWN inference toolkit.

Trains the two supported architectures on real or procedural datasets,
serializes checkpoints into the DPWN container, and talks to the
inference side exclusively through its command line tool and file
formats: export, cross-engine logit checks, and graded group studies.
"""

from .archs import ChainNet, chain_for, expected_tensors
from .data import load_dataset, synth_digits, synth_objects, \
    write_cifar_dataset, write_idx_dataset
from .dpwn import read_container, write_container
from .errors import ContainerError, DatasetUnavailableError, \
    DivergenceError, ExportError, TrainerError
from .export import export_dpwn, random_checkpoint, verify_round_trip
from .train import Checkpoint, TrainConfig, evaluate, load_checkpoint, \
    save_checkpoint, train_reference

__version__ = "0.1.0"

__all__ = [
    "ChainNet", "chain_for", "expected_tensors",
    "load_dataset", "synth_digits", "synth_objects",
    "write_cifar_dataset", "write_idx_dataset",
    "read_container", "write_container",
    "ContainerError", "DatasetUnavailableError", "DivergenceError",
    "ExportError", "TrainerError",
    "export_dpwn", "random_checkpoint", "verify_round_trip",
    "Checkpoint", "TrainConfig", "evaluate", "load_checkpoint",
    "save_checkpoint", "train_reference",
]
