"""Experiment drivers: Table II/III style comparisons, energy profiles and sweeps.

Every driver is deterministic given its ``ExperimentSpec``: training data,
validation data and test channels come from disjoint RNG stream labels,
and grid points reuse the same test seed so comparisons are paired.
"""

import csv
import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .. import rng as streams
from ..channel import angular_basis, grid_bin
from ..measurement import (
    AnalogMatrix,
    MeasurementConfig,
    conventional_config,
    effective_matrix,
    snr_to_sigma2,
)
from ..neural import TrainConfig, estimate, export_measurement, load_model, save_model, train
from ..regions import Region, RegistryConfig, segment
from ..solvers import SolverConfig, dft_slot_matrices, ls_full_overhead, omp_path, sbl_batch
from .dataset import default_params, draw_test_channels, gen_dataset, observe_channels
from .metrics import nmse_per_channel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Profile:
    name: str
    N: int
    R: int
    channels: int
    max_epochs: int
    n_test: int = 1000


QUICK = Profile("quick", N=32, R=8, channels=10_000, max_epochs=40)
PAPER = Profile("paper", N=64, R=16, channels=50_000, max_epochs=200)
PROFILES = {"quick": QUICK, "paper": PAPER}


@dataclass
class ExperimentSpec:
    name: str
    profile: Profile = QUICK
    seed: int = 0
    M: int = 4
    N_p: int = 20
    delta_theta_deg: float = 5.0
    gps_err_deg: float = 1.0
    beta_deg: float = 5.0
    snr_db: float = 20.0
    region_deg: tuple = (10.0, 15.0)
    rf_ratios: tuple = (4, 8)
    solvers: tuple = ("LS", "OMP", "SBL", "DL")
    n_test: int | None = None
    n_valid: int = 200
    cache_dir: str | None = None
    output: str | None = None
    # grids for sweeps / table3
    betas: tuple = (3.0, 5.0, 10.0, 15.0)
    spreads: tuple = (2.5, 5.0, 10.0)
    antennas: tuple = (32, 64, 96)
    snrs: tuple = (5.0, 15.0, 25.0)
    snr_generalization_train: float = 10.0
    snr_generalization_tests: tuple = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0)

    @property
    def test_count(self):
        return self.n_test or self.profile.n_test


@dataclass
class ResultRow:
    experiment: str
    solver: str
    phi: str
    N: int
    R: int
    beta_deg: float
    delta_theta_deg: float
    snr_train_db: float
    snr_test_db: float
    region: str
    nmse: float
    trials: int
    wall_time_s: float = field(default=0.0, compare=False)

    def key(self):
        return (self.experiment, self.solver, self.phi, self.N, self.R, self.beta_deg,
                self.delta_theta_deg, self.snr_train_db, self.snr_test_db, self.region)


CSV_FIELDS = [
    "experiment", "solver", "phi", "N", "R", "beta_deg", "delta_theta_deg",
    "snr_train_db", "snr_test_db", "region", "nmse", "trials",
]


def write_csv(rows, path):
    """Rows sorted by key; wall times go to a ``.timing.csv`` sidecar.

    Keeping timings out of the main file keeps it byte-reproducible.
    """
    rows = sorted(rows, key=lambda r: r.key())
    path = Path(path)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in rows:
            d = asdict(r)
            d["nmse"] = repr(float(d["nmse"]))
            w.writerow([d[k] for k in CSV_FIELDS])
    with open(path.with_suffix(".timing.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["experiment", "solver", "phi", "N", "R", "wall_time_s"])
        for r in rows:
            w.writerow([r.experiment, r.solver, r.phi, r.N, r.R, f"{r.wall_time_s:.3f}"])
    return path


# --------------------------------------------------------------------------
# Training with an on-disk cache


def region_for(start_deg, end_deg, gps_err_deg, index=-1):
    return Region(index, start_deg, end_deg, start_deg - gps_err_deg, end_deg + gps_err_deg)


@dataclass(frozen=True)
class TrainJob:
    N: int
    R: int
    M: int
    N_p: int
    delta_theta_deg: float
    region_start: float
    region_end: float
    gps_err_deg: float
    snr_db: float
    channels: int
    max_epochs: int
    seed: int
    freeze_encoder: bool = False

    def cache_key(self):
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def train_job(job, cache_dir=None):
    """Generate the region's dataset and train one model (cached by job)."""
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f"model_{job.cache_key()}.json"
        if path.exists():
            log.info("cache hit %s", path.name)
            return load_model(path)
    params = default_params(job.N, job.M, job.N_p, job.delta_theta_deg)
    region = region_for(job.region_start, job.region_end, job.gps_err_deg)
    t0 = time.perf_counter()
    ds = gen_dataset(region, params, job.channels, job.snr_db, job.seed)
    sigma2 = snr_to_sigma2(job.snr_db)
    cfg = TrainConfig(seed=job.seed, max_epochs=job.max_epochs, freeze_encoder=job.freeze_encoder)
    model, report = train(ds, cfg, conventional_config(job.N, job.R, sigma2))
    elapsed = time.perf_counter() - t0
    model.meta.update(
        region_start_deg=job.region_start,
        region_end_deg=job.region_end,
        delta_theta_deg=job.delta_theta_deg,
        snr_train_db=job.snr_db,
        seed=job.seed,
    )
    log.info(
        "trained N=%d R=%d region=[%g,%g] snr=%g frozen=%s: %d epochs, best val %.5g, %.0fs",
        job.N, job.R, job.region_start, job.region_end, job.snr_db, job.freeze_encoder,
        report.stopped_epoch, report.best_val_loss, elapsed,
    )
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        save_model(model, path)
        path.with_suffix(".report.json").write_text(
            json.dumps({**asdict(report), "job": asdict(job), "seconds": elapsed})
        )
    return model


# --------------------------------------------------------------------------
# Evaluators. Each returns the per-channel NMSE array.


def eval_dl(model, H, snr_db, seed, conjugate=False):
    """Full-chain test of a trained model on channels ``H`` (count, N, M).

    With ``conjugate`` the receiver uses conjugated combiners and the
    conjugate estimation path, as for a mirrored user.
    """
    cfg = export_measurement(model, snr_to_sigma2(snr_db))
    if conjugate:
        cfg = MeasurementConfig(cfg.w_rf.conj(), np.conj(cfg.w_bb), cfg.sigma2)
    Y = observe_channels(H, cfg, seed)
    count, M, R = Y.shape
    _, h_hat = estimate(model, Y.reshape(-1, R), conjugate_flag=conjugate)
    H_hat = h_hat.reshape(count, M, -1).transpose(0, 2, 1)
    return nmse_per_channel(H_hat, H)


def _cs_observations(H, cfg, seed):
    Y = observe_channels(H, cfg, seed)
    count, M, R = Y.shape
    return Y.reshape(-1, R).T  # (R, count*M)


def _to_channels(X_hat, basis, count, M):
    """Angular estimates (N, count*M) -> spatial channels (count, N, M)."""
    H_hat = basis.b @ X_hat
    return H_hat.T.reshape(count, M, -1).transpose(0, 2, 1)


def eval_omp(cfg, H, H_valid, seed):
    """OMP with the sparsity level chosen on a validation set.

    Returns ``(nmse_per_channel, best_k)``.
    """
    basis = angular_basis(cfg.N)
    phi = effective_matrix(cfg, basis)
    R = cfg.R

    def path_nmse(Hs, label):
        Yv = observe_channels(Hs, cfg, seed, label)
        count, M, _ = Yv.shape
        Yv = Yv.reshape(-1, R)
        paths = np.stack([omp_path(y, phi, R) for y in Yv], axis=1)  # (R, S, N)
        per_k = []
        for k in range(R):
            H_hat = _to_channels(paths[k].T, basis, count, M)
            per_k.append(nmse_per_channel(H_hat, Hs))
        return np.array(per_k)

    best_k = int(np.argmin(path_nmse(H_valid, "omp-valid-noise").mean(axis=1))) + 1
    return path_nmse(H, streams.TEST_NOISE)[best_k - 1], best_k


def eval_sbl(cfg, H, seed, solver_cfg=None):
    basis = angular_basis(cfg.N)
    phi = effective_matrix(cfg, basis)
    Y = _cs_observations(H, cfg, seed)
    ests = sbl_batch(Y, phi, cfg.sigma2, solver_cfg or SolverConfig())
    X_hat = np.stack([e.x_hat for e in ests], axis=1)
    return nmse_per_channel(_to_channels(X_hat, basis, H.shape[0], H.shape[2]), H)


def eval_ls(H, R, snr_db, seed):
    """LS with N/R pilot slots, each slot combining with a block of DFT rows."""
    count, N, M = H.shape
    sigma2 = snr_to_sigma2(snr_db)
    slots = dft_slot_matrices(N, R)
    cfgs = [
        MeasurementConfig(AnalogMatrix(np.angle(W)), np.eye(R, dtype=complex), sigma2)
        for W in slots
    ]
    obs = [observe_channels(H, c, seed, f"ls-slot-{s}") for s, c in enumerate(cfgs)]
    H_hat = np.empty_like(H)
    for c in range(count):
        H_hat[c] = ls_full_overhead([o[c].T for o in obs], slots, sigma2)
    return nmse_per_channel(H_hat, H)


# --------------------------------------------------------------------------
# Table II


def _job(spec, N, R, region, snr_db=None, freeze=False, delta_theta=None, channels=None):
    return TrainJob(
        N=N, R=R, M=spec.M, N_p=spec.N_p,
        delta_theta_deg=spec.delta_theta_deg if delta_theta is None else delta_theta,
        region_start=region[0], region_end=region[1], gps_err_deg=spec.gps_err_deg,
        snr_db=spec.snr_db if snr_db is None else snr_db,
        channels=channels or spec.profile.channels, max_epochs=spec.profile.max_epochs,
        seed=spec.seed, freeze_encoder=freeze,
    )


def _row(spec, solver, phi, N, R, nmse, trials, t0, **kw):
    base = dict(
        experiment=spec.name, solver=solver, phi=phi, N=N, R=R, beta_deg=spec.beta_deg,
        delta_theta_deg=spec.delta_theta_deg, snr_train_db=spec.snr_db, snr_test_db=spec.snr_db,
        region=f"[{spec.region_deg[0]:g},{spec.region_deg[1]:g}]", nmse=float(nmse),
        trials=int(trials), wall_time_s=time.perf_counter() - t0,
    )
    base.update(kw)
    return ResultRow(**base)


def run_table2(spec):
    """LS / OMP / SBL / DL with conventional and learned measurement matrices."""
    N = spec.profile.N
    params = default_params(N, spec.M, spec.N_p, spec.delta_theta_deg)
    lo, hi = spec.region_deg
    H, _ = draw_test_channels(params, lo, hi, spec.test_count, spec.seed)
    H_val, _ = draw_test_channels(params, lo, hi, spec.n_valid, spec.seed, streams.VALID)
    sigma2 = snr_to_sigma2(spec.snr_db)
    rows = []
    for ratio in spec.rf_ratios:
        R = N // ratio
        t0 = time.perf_counter()
        learned = train_job(_job(spec, N, R, spec.region_deg), spec.cache_dir)
        configs = {
            "conventional": conventional_config(N, R, sigma2),
            "learned": export_measurement(learned, sigma2),
        }
        if "DL" in spec.solvers:
            rows.append(_row(spec, "DL", "learned", N, R,
                             eval_dl(learned, H, spec.snr_db, spec.seed).mean(), len(H), t0))
            t0 = time.perf_counter()
            frozen = train_job(_job(spec, N, R, spec.region_deg, freeze=True), spec.cache_dir)
            rows.append(_row(spec, "DL", "conventional", N, R,
                             eval_dl(frozen, H, spec.snr_db, spec.seed).mean(), len(H), t0))
        if "LS" in spec.solvers:
            t0 = time.perf_counter()
            rows.append(_row(spec, "LS", "full-overhead", N, R,
                             eval_ls(H, R, spec.snr_db, spec.seed).mean(), len(H), t0))
        for name, cfg in configs.items():
            if "OMP" in spec.solvers:
                t0 = time.perf_counter()
                err, _ = eval_omp(cfg, H, H_val, spec.seed)
                rows.append(_row(spec, "OMP", name, N, R, err.mean(), len(H), t0))
            if "SBL" in spec.solvers:
                t0 = time.perf_counter()
                err = eval_sbl(cfg, H, spec.seed)
                rows.append(_row(spec, "SBL", name, N, R, err.mean(), len(H), t0))
    return rows


# --------------------------------------------------------------------------
# Table III


def representative_region(beta_deg, reference_deg=10.5):
    """The tile of width beta that contains the reference azimuth."""
    regions = segment(RegistryConfig(beta_deg=beta_deg, gps_err_deg=0.0))
    for r in regions:
        if r.theta_start <= reference_deg < r.theta_end:
            return r.theta_start, r.theta_end
    raise ValueError(f"no region of width {beta_deg} contains {reference_deg}")


def table3_test_range(betas, reference_deg=10.5):
    """Azimuth range shared by every representative region (paired test set)."""
    bounds = [representative_region(b, reference_deg) for b in betas]
    return max(b[0] for b in bounds), min(b[1] for b in bounds)


def run_table3(spec):
    """Segmentation granularity: N_net and DL NMSE per region width.

    Each width trains the tile containing 10.5 degrees. All models are
    tested on the same channels, drawn from the azimuth range common to
    every tile, so the comparison is paired.
    """
    N = spec.profile.N
    R = spec.profile.R
    params = default_params(N, spec.M, spec.N_p, spec.delta_theta_deg)
    lo, hi = table3_test_range(spec.betas)
    H, _ = draw_test_channels(params, lo, hi, spec.test_count, spec.seed)
    rows = []
    for beta in spec.betas:
        t0 = time.perf_counter()
        region = representative_region(beta)
        model = train_job(_job(spec, N, R, region), spec.cache_dir)
        err = eval_dl(model, H, spec.snr_db, spec.seed).mean()
        n_net = RegistryConfig(beta_deg=beta).n_net
        rows.append(_row(spec, "DL", "learned", N, R, err, len(H), t0, beta_deg=beta,
                         region=f"[{region[0]:g},{region[1]:g}]"))
        rows.append(_row(spec, "N_net", "-", N, R, n_net, 1, t0, beta_deg=beta,
                         region=f"[{region[0]:g},{region[1]:g}]"))
    return rows


# --------------------------------------------------------------------------
# Energy profile


ENERGY_FIELDS = ["bin", "eta", "conventional_energy", "learned_energy", "mean_abs_x"]


def energy_profile(model, n_mc=10_000, seed=0, delta_theta_deg=None, region_deg=None,
                   M=4, N_p=20):
    """Column energies of the conventional and learned Phi, and mean |x| per bin.

    Each column is normalized by its own maximum so the three curves share
    one scale.
    """
    N, R = model.n, model.r
    basis = angular_basis(N)
    meta = model.meta
    dtheta = delta_theta_deg if delta_theta_deg is not None else meta.get("delta_theta_deg", 5.0)
    lo, hi = region_deg or (meta.get("region_start_deg", 10.0), meta.get("region_end_deg", 15.0))
    phi_c = effective_matrix(conventional_config(N, R, 0.0), basis)
    phi_l = effective_matrix(export_measurement(model), basis)
    e_c = np.sum(np.abs(phi_c) ** 2, axis=0)
    e_l = np.sum(np.abs(phi_l) ** 2, axis=0)
    params = default_params(N, M, N_p, dtheta)
    H, _ = draw_test_channels(params, lo, hi, n_mc, seed, "energy-profile")
    X = np.einsum("nk,ckm->cnm", basis.b.conj().T, H)
    mean_abs = np.abs(X).mean(axis=(0, 2))
    return {
        "bin": np.arange(N),
        "eta": np.asarray(basis.eta),
        "conventional_energy": e_c / e_c.max(),
        "learned_energy": e_l / e_l.max(),
        "mean_abs_x": mean_abs / mean_abs.max(),
        "raw_conventional_energy": e_c,
        "raw_learned_energy": e_l,
    }


def attention_bins(N, lo_deg, hi_deg):
    """Angular bins spanned by directions in ``[lo, hi]`` degrees."""
    k_lo = grid_bin(np.sin(np.deg2rad(lo_deg)), N)
    k_hi = grid_bin(np.sin(np.deg2rad(hi_deg)), N)
    return np.arange(k_lo, k_hi + 1) % N


def run_energy_profile(model, n_mc=10_000, seed=0, out=None):
    prof = energy_profile(model, n_mc, seed)
    if out is not None:
        with open(out, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(ENERGY_FIELDS)
            for i in range(model.n):
                w.writerow([int(prof["bin"][i])] + [repr(float(prof[k][i])) for k in ENERGY_FIELDS[1:]])
    return prof


# --------------------------------------------------------------------------
# Sweeps


def run_sweeps(spec, which=("spread", "antennas", "snr", "generalization")):
    """Trend experiments over angular spread, antenna count and SNR.

    Grid points share the test seed (paired channels and noise streams).
    Antenna sweeps keep ``R/N`` equal to the profile's ratio.
    """
    N0, R0 = spec.profile.N, spec.profile.R
    ratio = N0 // R0
    lo, hi = spec.region_deg
    rows = []

    def dl_point(N, R, dtheta, snr_train, snr_test, tag):
        t0 = time.perf_counter()
        params = default_params(N, spec.M, spec.N_p, dtheta)
        H, _ = draw_test_channels(params, lo, hi, spec.test_count, spec.seed)
        model = train_job(_job(spec, N, R, spec.region_deg, snr_db=snr_train, delta_theta=dtheta),
                          spec.cache_dir)
        err = eval_dl(model, H, snr_test, spec.seed).mean()
        return _row(replace(spec, name=f"{spec.name}-{tag}"), "DL", "learned", N, R, err,
                    len(H), t0, delta_theta_deg=dtheta, snr_train_db=snr_train,
                    snr_test_db=snr_test)

    if "spread" in which:
        for d in spec.spreads:
            rows.append(dl_point(N0, R0, d, spec.snr_db, spec.snr_db, "spread"))
    if "antennas" in which:
        for N in spec.antennas:
            rows.append(dl_point(N, N // ratio, spec.delta_theta_deg, spec.snr_db, spec.snr_db,
                                 "antennas"))
    if "snr" in which:
        for s in spec.snrs:
            rows.append(dl_point(N0, R0, spec.delta_theta_deg, s, s, "snr"))
    if "generalization" in which:
        s_train = spec.snr_generalization_train
        for s in spec.snr_generalization_tests:
            rows.append(dl_point(N0, R0, spec.delta_theta_deg, s_train, s, "generalization"))
            rows.append(dl_point(N0, R0, spec.delta_theta_deg, s, s, "matched"))
    return rows


EXPERIMENTS = {
    "table2": run_table2,
    "table3": run_table3,
    "sweeps": run_sweeps,
}
