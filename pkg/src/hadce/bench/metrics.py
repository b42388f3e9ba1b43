import numpy as np


def nmse(h_hat, h):
    """``||H_hat - H||_F^2 / ||H||_F^2``."""
    h_hat, h = np.asarray(h_hat), np.asarray(h)
    if h_hat.shape != h.shape:
        raise ValueError(f"shape mismatch {h_hat.shape} vs {h.shape}")
    denom = np.sum(np.abs(h) ** 2)
    if denom == 0:
        raise ValueError("NMSE undefined for an all-zero reference channel")
    return float(np.sum(np.abs(h_hat - h) ** 2) / denom)


def nmse_per_channel(H_hat, H):
    """NMSE of each channel matrix in a ``(count, N, M)`` batch."""
    H_hat, H = np.asarray(H_hat), np.asarray(H)
    if H_hat.shape != H.shape:
        raise ValueError(f"shape mismatch {H_hat.shape} vs {H.shape}")
    axes = tuple(range(1, H.ndim))
    denom = np.sum(np.abs(H) ** 2, axis=axes)
    if np.any(denom == 0):
        raise ValueError("NMSE undefined for an all-zero reference channel")
    return np.sum(np.abs(H_hat - H) ** 2, axis=axes) / denom
