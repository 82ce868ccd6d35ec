"""Error types for training, export, and container I/O."""

__all__ = [
    "TrainerError", "DatasetUnavailableError", "DivergenceError",
    "ExportError", "ContainerError",
]


class TrainerError(Exception):
    """Base class for everything this package raises on purpose."""


class DatasetUnavailableError(TrainerError):
    """Requested dataset is neither present locally nor downloadable."""


class DivergenceError(TrainerError):
    """Training produced a non-finite loss; the run is aborted."""


class ExportError(TrainerError):
    """Checkpoint does not match the declared architecture contract."""


class ContainerError(TrainerError):
    """A DPWN file violates the byte layout or header schema."""
