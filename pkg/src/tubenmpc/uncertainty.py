"""Box uncertainty on relative mass, length and inertia deviations."""
from dataclasses import dataclass

import numpy as np

DEVIATION_NAMES = ("d_m1", "d_m2", "d_l1", "d_l2", "d_J1", "d_J2")


@dataclass(frozen=True)
class UncertaintyBox:
    """Componentwise bounds ``|p_k| <= b_k`` on the deviation vector."""

    b_m1: float = 0.25
    b_m2: float = 0.25
    b_l1: float = 0.24
    b_l2: float = 0.24
    b_J1: float = 0.25
    b_J2: float = 0.25

    def __post_init__(self):
        b = self.as_array()
        if not np.all(np.isfinite(b)) or np.any(b < 0.0):
            raise ValueError(f"uncertainty bounds must be finite and non-negative, got {b}")

    @classmethod
    def from_array(cls, b):
        b = np.asarray(b, dtype=float)
        if b.shape != (6,):
            raise ValueError(f"need 6 bounds, got shape {b.shape}")
        return cls(*map(float, b))

    @classmethod
    def zero(cls):
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)

    def as_array(self):
        return np.array([self.b_m1, self.b_m2, self.b_l1, self.b_l2, self.b_J1, self.b_J2])

    def contains(self, p):
        return bool(np.all(np.abs(np.asarray(p)) <= self.as_array()))


def weighting_matrix(box: UncertaintyBox):
    """Diagonal ellipsoidal weighting of squared bounds."""
    return np.diag(box.as_array() ** 2)


def sample_uniform(box: UncertaintyBox, rng_seed: int, count: int):
    """Draw ``count`` deviation vectors uniformly from the box.

    Uses a PCG64 generator seeded with ``rng_seed``; returns an array of
    shape ``(count, 6)``.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(rng_seed)
    b = box.as_array()
    return rng.uniform(-1.0, 1.0, size=(count, 6)) * b
