import numpy as np


def kaiming_init(shape, fan_in: int, seed=0, dtype=np.float32) -> np.ndarray:
    """Draws from N(0, 2 / fan_in); identical output for identical seeds."""
    if fan_in <= 0:
        raise ValueError("fan_in must be positive")
    rng = np.random.default_rng(seed)
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)
