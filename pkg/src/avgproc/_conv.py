import numpy as np
from scipy import fft as sfft


def autoconvolve(x: np.ndarray, method: str = "fft") -> np.ndarray:
    """Full linear self-convolution, length 2 len(x) - 1."""
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    if method == "direct":
        return np.convolve(x, x)
    if method != "fft":
        raise ValueError(f"unknown convolution method {method!r}")
    size = sfft.next_fast_len(2 * n - 1, real=True)
    fx = sfft.rfft(x, size)
    return sfft.irfft(fx * fx, size)[: 2 * n - 1]
