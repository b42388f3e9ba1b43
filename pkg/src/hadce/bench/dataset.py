"""Training datasets and test-channel generation.

A dataset file is one line of JSON (the header) followed by a raw
little-endian float64 payload. Each sample contributes ``x`` then
``x_noisy``, both real-stacked (2N values).
"""

import hashlib
import json
from dataclasses import dataclass, replace

import numpy as np

from ..channel import SimParams, angular_basis, sample_paths, synth_channel
from ..measurement import dft_pilot, observe_block, snr_to_sigma2
from ..rng import RNG_ALGORITHM, TEST, TEST_NOISE, TRAIN, complex_normal, stream

DATASET_FORMAT_VERSION = 1
MAGIC = "HADCE-DATASET"


class DatasetFormatError(ValueError):
    pass


@dataclass
class Dataset:
    header: dict
    x: np.ndarray
    x_noisy: np.ndarray

    @property
    def per_channel(self):
        return int(self.header["M"])

    def __len__(self):
        return len(self.x)


def _draw_channel(params, az_lo_deg, az_hi_deg, rng):
    """Azimuth, then paths, then ``H``, all from one generator."""
    az = rng.uniform(az_lo_deg, az_hi_deg) if az_hi_deg > az_lo_deg else az_lo_deg
    p = replace(params, theta_az=float(np.deg2rad(az)))
    return az, synth_channel(sample_paths(p, rng), p.N, p.M)


def gen_dataset(region, params, count, snr_db, seed, label=TRAIN):
    """Noisy/clean angular-channel pairs for one region.

    Each of ``count`` channels gets its own stream ``(seed, label, d)``: an
    azimuth uniform in the region's expanded range, paths around it, the
    channel, its angular form ``X = B^H H`` and noise added once. Every
    column of ``X`` becomes one sample, so there are ``count * M`` pairs.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    N, M = params.N, params.M
    B = angular_basis(N)
    bh = B.b.conj().T
    sigma2 = snr_to_sigma2(snr_db)
    lo, hi = region.expanded_start, region.expanded_end
    x = np.empty((count * M, 2 * N))
    xn = np.empty((count * M, 2 * N))
    for d in range(count):
        rng = stream(seed, label, d)
        _, H = _draw_channel(params, lo, hi, rng)
        X = bh @ H
        Xn = X + complex_normal(rng, X.shape, sigma2) if sigma2 > 0 else X
        rows = slice(d * M, (d + 1) * M)
        x[rows, :N], x[rows, N:] = X.T.real, X.T.imag
        xn[rows, :N], xn[rows, N:] = Xn.T.real, Xn.T.imag
    header = {
        "format_version": DATASET_FORMAT_VERSION,
        "N": N,
        "M": M,
        "N_p": params.N_p,
        "count": count,
        "samples": count * M,
        "snr_db": snr_db,
        "region_index": region.index,
        "region_start_deg": region.theta_start,
        "region_end_deg": region.theta_end,
        "expanded_start_deg": lo,
        "expanded_end_deg": hi,
        "delta_theta_deg": float(np.rad2deg(params.delta_theta)),
        "seed": int(seed),
        "stream": label,
        "rng_algorithm": RNG_ALGORITHM,
        "layout": "per sample: x[2N] then x_noisy[2N]; real parts then imaginary parts; <f8",
    }
    return Dataset(header=header, x=x, x_noisy=xn)


def _payload(ds):
    inter = np.empty((len(ds.x), 2, ds.x.shape[1]), dtype="<f8")
    inter[:, 0] = ds.x
    inter[:, 1] = ds.x_noisy
    return inter.tobytes()


def write_dataset(ds, path):
    payload = _payload(ds)
    header = dict(ds.header)
    header["payload_bytes"] = len(payload)
    header["payload_sha256"] = hashlib.sha256(payload).hexdigest()
    line = MAGIC + " " + json.dumps(header, sort_keys=True) + "\n"
    with open(path, "wb") as f:
        f.write(line.encode("utf-8"))
        f.write(payload)


def read_dataset(path):
    with open(path, "rb") as f:
        line = f.readline().decode("utf-8")
        payload = f.read()
    if not line.startswith(MAGIC + " "):
        raise DatasetFormatError(f"{path} is not a dataset file")
    header = json.loads(line[len(MAGIC) + 1:])
    if header.get("format_version") != DATASET_FORMAT_VERSION:
        raise DatasetFormatError(f"unsupported dataset format_version {header.get('format_version')!r}")
    if len(payload) != header["payload_bytes"]:
        raise DatasetFormatError("payload length does not match header")
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise DatasetFormatError("payload checksum mismatch")
    two_n = 2 * header["N"]
    inter = np.frombuffer(payload, dtype="<f8").reshape(-1, 2, two_n)
    return Dataset(header=header, x=inter[:, 0].astype(np.float64), x_noisy=inter[:, 1].astype(np.float64))


# --------------------------------------------------------------------------
# Test channels and observations


def draw_test_channels(params, az_lo_deg, az_hi_deg, count, seed, label=TEST):
    """``count`` channels with azimuths uniform in ``[az_lo, az_hi]``.

    Returns ``(H, azimuths)`` with ``H`` shaped ``(count, N, M)``.
    """
    H = np.empty((count, params.N, params.M), dtype=complex)
    az = np.empty(count)
    for c in range(count):
        az[c], H[c] = _draw_channel(params, az_lo_deg, az_hi_deg, stream(seed, label, c))
    return H, az


def observe_channels(H, cfg, seed, label=TEST_NOISE):
    """Full-chain decorrelated observations ``(count, M, R)`` for many channels.

    Channel ``c`` uses noise stream ``(seed, label, c)``, so two receivers
    observing the same channels with the same seed see the same noise.
    """
    count, N, M = H.shape
    P = dft_pilot(M)
    out = np.empty((count, M, cfg.R), dtype=complex)
    for c in range(count):
        _, ys = observe_block(H[c], cfg, P, stream(seed, label, c))
        out[c] = ys.T
    return out


def default_params(N=64, M=4, N_p=20, delta_theta_deg=5.0):
    return SimParams(N=N, M=M, N_p=N_p, delta_theta=float(np.deg2rad(delta_theta_deg)))
