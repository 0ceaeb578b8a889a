"""
Exceptions Module
-----------------
Error hierarchy shared by the simulation, estimation, prediction and harness
layers. Each class also derives from the closest builtin so callers can keep
catching `ValueError` / `FileNotFoundError` as usual.
"""

from typing import Optional, Tuple


class ChannelPredError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(ChannelPredError, ValueError):
    """Invalid configuration value (scenario, correlation, sweep settings)."""


class DomainError(ChannelPredError, ValueError):
    """An operation was called outside its precondition."""


class DegenerateNormalizerError(DomainError):
    """
    Raised by the NMSE when a true DL element is (numerically) zero.

    Attributes:
        index: (frame, subcarrier) of the first offending element.
    """

    def __init__(self, index: Tuple[int, int], magnitude: float):
        self.index = index
        self.magnitude = magnitude
        super().__init__(
            f"True DL response at (t={index[0]}, k={index[1]}) has magnitude "
            f"{magnitude:.3e} < 1e-12; NMSE normalizer is undefined."
        )


class NumericalError(ChannelPredError, ArithmeticError):
    """Singular or ill-conditioned linear system."""


class TrainingDivergenceError(ChannelPredError, RuntimeError):
    """
    Raised when the training loss stops being finite.

    Carries the diagnostic the sweep records for a failed cell.
    """

    def __init__(
        self,
        epoch: int,
        batch: int,
        learning_rate: float,
        init_scale: float,
        loss: Optional[float] = None,
    ):
        self.epoch = epoch
        self.batch = batch
        self.learning_rate = learning_rate
        self.init_scale = init_scale
        self.loss = loss
        super().__init__(
            f"Non-finite loss ({loss}) at epoch {epoch}, batch {batch}. "
            f"learning_rate={learning_rate:g}, init_scale=U(-{init_scale:.4g}, {init_scale:.4g}). "
            "Try a smaller learning rate or check the input normalization."
        )


class CheckpointNotFoundError(ChannelPredError, FileNotFoundError):
    """A load-only run asked for a model checkpoint that does not exist."""
