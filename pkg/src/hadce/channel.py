"""Multipath ULA channel simulator and the angular-domain transform.

All angles are radians in this module. Channels are ``N x M`` complex
matrices (BS antennas by user antennas).
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .rng import complex_normal


@dataclass(frozen=True)
class SimParams:
    """Channel generation parameters.

    Parameters
    ----------
    N : int
        BS antenna count.
    M : int
        User antenna count.
    N_p : int
        Number of propagation paths.
    delta_theta : float
        Angular spread of the AoAs around the azimuth, radians.
    theta_az : float
        User azimuth relative to the BS array, radians.
    """

    N: int = 64
    M: int = 4
    N_p: int = 20
    delta_theta: float = np.deg2rad(5.0)
    theta_az: float = 0.0

    def __post_init__(self):
        if self.N < 2:
            raise ValueError(f"N must be >= 2, got {self.N}")
        if self.M < 1:
            raise ValueError(f"M must be >= 1, got {self.M}")
        if self.N_p < 1:
            raise ValueError(f"N_p must be >= 1, got {self.N_p}")
        if not 0 <= self.delta_theta < np.pi / 2:
            raise ValueError(f"delta_theta must be in [0, pi/2), got {self.delta_theta}")
        if not -np.pi <= self.theta_az <= np.pi:
            raise ValueError(f"theta_az must be in [-pi, pi], got {self.theta_az}")


@dataclass(frozen=True)
class PathSet:
    """One channel realization: per-path gains, AoAs (BS) and AoDs (user)."""

    alphas: np.ndarray
    aoas: np.ndarray
    aods: np.ndarray

    def __post_init__(self):
        n = len(self.alphas)
        if len(self.aoas) != n or len(self.aods) != n:
            raise ValueError("alphas, aoas and aods must have the same length")

    @property
    def n_paths(self):
        return len(self.alphas)

    def __eq__(self, other):
        if not isinstance(other, PathSet):
            return NotImplemented
        return (
            np.array_equal(self.alphas, other.alphas)
            and np.array_equal(self.aoas, other.aoas)
            and np.array_equal(self.aods, other.aods)
        )


@dataclass(frozen=True)
class AngularBasis:
    """Shifted DFT basis ``B`` with grid offsets ``eta``.

    Column ``n`` is ``exp(j*pi*eta[n]*k) / sqrt(N)`` for ``k = 0..N-1`` with
    ``eta[n] = (2n - 1) / N``.
    """

    b: np.ndarray
    eta: np.ndarray = field(repr=False)

    @property
    def N(self):
        return self.b.shape[0]


def steering_vector(angle, n_elems):
    """ULA response with half-wavelength spacing, ``exp(j*pi*sin(angle)*k)``."""
    k = np.arange(n_elems)
    return np.exp(1j * np.pi * np.sin(angle) * k)


def steering_matrix(angles, n_elems):
    """Stack of steering vectors, one column per angle."""
    k = np.arange(n_elems)[:, None]
    return np.exp(1j * np.pi * k * np.sin(np.asarray(angles))[None, :])


def sample_paths(params, rng):
    """Draw AoAs, AoDs and gains for one channel.

    AoAs are uniform within ``theta_az +- delta_theta``, AoDs uniform on
    ``[0, 2*pi)`` and gains CN(0, 1). Draw order is fixed (aoas, aods,
    alphas) so a given generator state always yields the same PathSet.
    """
    lo = params.theta_az - params.delta_theta
    hi = params.theta_az + params.delta_theta
    aoas = rng.uniform(lo, hi, params.N_p) if hi > lo else np.full(params.N_p, params.theta_az)
    aods = rng.uniform(0.0, 2 * np.pi, params.N_p)
    alphas = complex_normal(rng, params.N_p)
    return PathSet(alphas=alphas, aoas=aoas, aods=aods)


def synth_channel(paths, N, M):
    """``H = 1/sqrt(N_p) * sum_i alpha_i a_B(theta_i) a_U(phi_i)^T``."""
    a_b = steering_matrix(paths.aoas, N)
    a_u = steering_matrix(paths.aods, M)
    return (a_b * paths.alphas[None, :]) @ a_u.T / np.sqrt(paths.n_paths)


def mirror_paths(paths):
    """Paths of the mirrored user: negated angles and conjugated gains.

    The mirrored channel is the entry-wise conjugate of the original.
    """
    return PathSet(alphas=np.conj(paths.alphas), aoas=-paths.aoas, aods=-paths.aods)


@lru_cache(maxsize=32)
def _basis_arrays(N):
    n = np.arange(N)
    eta = (2 * n - 1) / N
    b = np.exp(1j * np.pi * np.outer(np.arange(N), eta)) / np.sqrt(N)
    b.setflags(write=False)
    eta.setflags(write=False)
    return b, eta


def angular_basis(N):
    if N < 2:
        raise ValueError(f"N must be >= 2, got {N}")
    b, eta = _basis_arrays(int(N))
    return AngularBasis(b=b, eta=eta)


def _check_rows(a, basis, what):
    if a.shape[0] != basis.N:
        raise ValueError(f"{what} has {a.shape[0]} rows, basis is {basis.N}x{basis.N}")


def to_angular(H, basis):
    """``X = B^H H``."""
    H = np.asarray(H)
    _check_rows(H, basis, "channel")
    return basis.b.conj().T @ H


def from_angular(X, basis):
    """``H = B X``."""
    X = np.asarray(X)
    _check_rows(X, basis, "angular channel")
    return basis.b @ X


def conjugate_recover(x_hat, basis):
    """Angular estimate for the mirrored user, ``B^H (B x_hat)^*``.

    Works on a single length-N vector or on a batch with samples in rows.
    """
    x_hat = np.asarray(x_hat)
    if x_hat.shape[-1] != basis.N:
        raise ValueError(f"expected length {basis.N}, got {x_hat.shape[-1]}")
    if x_hat.ndim == 1:
        return basis.b.conj().T @ np.conj(basis.b @ x_hat)
    return np.conj(x_hat @ basis.b.T) @ basis.b.conj()


def grid_bin(sin_value, N):
    """Index of the angular bin closest to a direction with the given sine."""
    # eta_n = (2n - 1)/N covers [-1/N, 2 - 3/N]; negative sines wrap by +2.
    s = np.asarray(sin_value, dtype=float)
    s = np.where(s < -1.0 / N, s + 2.0, s)
    return np.rint((N * s + 1) / 2).astype(int) % N
