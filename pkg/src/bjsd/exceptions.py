"""Exception types raised by bjsd."""

import numpy as np


class UnstableFilterError(ValueError):
    """A denominator polynomial has a root on or outside the unit circle."""

    def __init__(self, message, root_magnitude):
        super().__init__(f"{message} (max root magnitude {root_magnitude:.6g})")
        self.root_magnitude = root_magnitude


class RankDeficiencyError(np.linalg.LinAlgError):
    """Least-squares regressor is numerically rank deficient."""

    def __init__(self, message, condition):
        super().__init__(f"{message} (condition estimate {condition:.3g})")
        self.condition = condition


class ModelValidationError(ValueError):
    """A Box-Jenkins model violates the stability or coprimality requirements."""
