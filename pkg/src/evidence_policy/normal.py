"""Standard normal helpers for one-sided tests."""
import numpy as np
from scipy.special import ndtr, ndtri


def norm_cdf(x):
    return ndtr(x)


def norm_sf(x):
    """Upper tail 1 - Phi(x), computed without cancellation."""
    return ndtr(-np.asarray(x, dtype=float))


def critical_value(alpha):
    """z_{1-alpha}, the one-sided critical value at level ``alpha``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return float(-ndtri(alpha))
