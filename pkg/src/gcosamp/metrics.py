import math

import numpy as np


def psnr(reference, test, peak=255.0):
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs."""
    reference = np.asarray(reference, dtype=float)
    test = np.asarray(test, dtype=float)
    if reference.shape != test.shape:
        raise ValueError(f"shape mismatch: {reference.shape} vs {test.shape}")
    mse = float(np.mean((reference - test) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak ** 2 / mse)


def relative_error(estimate, truth):
    return float(np.linalg.norm(np.asarray(estimate) - truth) / np.linalg.norm(truth))
