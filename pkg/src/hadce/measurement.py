"""Hybrid analog-digital observation chain.

The BS observes ``Y = W_BB W_RF (H P + N)``; after pilot decorrelation
each user antenna gives ``y_m = W_BB W_RF h_m + n_m``, which in the angular
domain is ``y = Phi x + n`` with ``Phi = W_BB W_RF B``.
"""

from dataclasses import dataclass
from math import gcd

import numpy as np

from .rng import complex_normal


def snr_to_sigma2(snr_db):
    """Noise variance for unit pilot power; ``inf`` dB gives 0."""
    if np.isinf(snr_db) and snr_db > 0:
        return 0.0
    return float(10.0 ** (-snr_db / 10.0))


def sigma2_to_snr(sigma2):
    if sigma2 == 0:
        return float("inf")
    return float(-10.0 * np.log10(sigma2))


@dataclass(frozen=True)
class AnalogMatrix:
    """Phase-shifter network parametrized by its phases (radians).

    Entries are ``exp(j*phase) / sqrt(N)``, so the constant-modulus
    constraint holds by construction.
    """

    phases: np.ndarray

    @property
    def shape(self):
        return self.phases.shape

    @property
    def matrix(self):
        n = self.phases.shape[1]
        return np.exp(1j * self.phases) / np.sqrt(n)

    def conj(self):
        return AnalogMatrix(-self.phases)


@dataclass(frozen=True)
class MeasurementConfig:
    """Analog and digital combiners plus the receiver noise level."""

    w_rf: AnalogMatrix
    w_bb: np.ndarray
    sigma2: float

    def __post_init__(self):
        R, N = self.w_rf.shape
        if R > N:
            raise ValueError(f"R={R} RF chains exceeds N={N} antennas")
        if self.w_bb.shape != (R, R):
            raise ValueError(f"W_BB must be {R}x{R}, got {self.w_bb.shape}")
        if not np.all(np.isfinite(self.w_bb)):
            raise ValueError("W_BB has non-finite entries")
        if self.sigma2 < 0:
            raise ValueError(f"sigma2 must be >= 0, got {self.sigma2}")

    @property
    def R(self):
        return self.w_rf.shape[0]

    @property
    def N(self):
        return self.w_rf.shape[1]

    @property
    def snr_db(self):
        return sigma2_to_snr(self.sigma2)

    @property
    def combiner(self):
        """``W_BB W_RF`` as an R x N complex matrix."""
        return self.w_bb @ self.w_rf.matrix


def dft_pilot(M):
    """Unitary M-point DFT pilot matrix; row m is the pilot of antenna m."""
    k = np.arange(M)
    return np.exp(-2j * np.pi * np.outer(k, k) / M) / np.sqrt(M)


def zc_root(N):
    """Smallest integer root > 1 coprime with N."""
    q = 2
    while gcd(q, N) != 1:
        q += 1
    return q


def zadoff_chu(N, q=None):
    q = zc_root(N) if q is None else q
    k = np.arange(N)
    if N % 2 == 0:
        return np.exp(-1j * np.pi * q * k * k / N)
    return np.exp(-1j * np.pi * q * k * (k + 1) / N)


def zadoff_chu_analog(N, R):
    """Conventional analog combiner: R cyclic shifts of one ZC sequence.

    Row ``i`` is the root sequence shifted by ``i * (N // R)``.
    """
    if R > N:
        raise ValueError(f"R={R} exceeds N={N}")
    z = zadoff_chu(N)
    step = N // R
    rows = np.stack([np.roll(z, -i * step) for i in range(R)])
    return AnalogMatrix(np.angle(rows))


def conventional_config(N, R, sigma2):
    return MeasurementConfig(
        w_rf=zadoff_chu_analog(N, R), w_bb=np.eye(R, dtype=complex), sigma2=sigma2
    )


def effective_matrix(cfg, basis):
    """Measurement matrix ``Phi = W_BB W_RF B`` (R x N)."""
    if cfg.N != basis.N:
        raise ValueError(f"config has N={cfg.N}, basis has N={basis.N}")
    return cfg.combiner @ basis.b


def observe_block(H, cfg, pilot, rng):
    """Full-chain pilot observation.

    Returns ``(Y, ys)`` where ``Y = W_BB W_RF (H P + N)`` is R x M and
    ``ys[:, m] = Y p_m^H`` is the decorrelated observation of antenna m.
    Noise is drawn fresh from ``rng`` on every call.
    """
    H = np.asarray(H)
    N, M = H.shape
    if N != cfg.N:
        raise ValueError(f"channel has N={N}, config has N={cfg.N}")
    if pilot.shape != (M, M):
        raise ValueError(f"pilot must be {M}x{M}, got {pilot.shape}")
    noise = complex_normal(rng, (N, M), cfg.sigma2) if cfg.sigma2 > 0 else 0.0
    Y = cfg.combiner @ (H @ pilot + noise)
    ys = Y @ pilot.conj().T
    return Y, ys


def angular_noise_equivalent(x, sigma2, rng):
    """Add i.i.d. CN(0, sigma2) noise directly to an angular channel.

    Because ``B`` is unitary and pilot rows have unit norm, ``B^H N p^H``
    has the same law as the receiver noise; this is what lets training
    inject noise in the angular domain.
    """
    x = np.asarray(x)
    if sigma2 == 0:
        return x.copy()
    return x + complex_normal(rng, x.shape, sigma2)
