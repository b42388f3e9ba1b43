"""Command-line entry point: ``hadce <subcommand> ...``.

Angles are degrees, SNR is dB and seeds are unsigned 64-bit integers.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from ..measurement import MeasurementConfig, conventional_config, dft_pilot, observe_block, snr_to_sigma2
from ..neural import TrainConfig, estimate, export_measurement, load_model, save_model, train
from ..regions import Registry, RegistryConfig, registry_load, registry_save
from ..rng import TEST, TEST_NOISE, stream
from .dataset import _draw_channel, default_params, gen_dataset, read_dataset, write_dataset
from .experiments import EXPERIMENTS, PROFILES, ExperimentSpec, region_for, run_energy_profile, write_csv
from .metrics import nmse

log = logging.getLogger("hadce")


def _seed(text):
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be in [0, 2^64), got {text}")
    return v


def _common(p, out_required=False, out_help="output path"):
    p.add_argument("--seed", type=_seed, default=0, help="RNG seed (default 0)")
    p.add_argument("--out", required=out_required, help=out_help)


def _sim_args(p):
    p.add_argument("--N", type=int, default=64, help="BS antennas")
    p.add_argument("--M", type=int, default=4, help="user antennas")
    p.add_argument("--Np", type=int, default=20, help="paths per channel")
    p.add_argument("--delta-theta", type=float, default=5.0, help="angular spread (deg)")
    p.add_argument("--snr", type=float, default=20.0, help="SNR (dB)")


def build_parser():
    parser = argparse.ArgumentParser(prog="hadce", description="HAD massive-MIMO channel estimation toolkit")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-dataset", help="generate a training dataset for one region")
    _sim_args(p)
    p.add_argument("--region-start", type=float, default=10.0)
    p.add_argument("--region-end", type=float, default=15.0)
    p.add_argument("--gps-err", type=float, default=1.0, help="azimuth error margin (deg)")
    p.add_argument("--count", type=int, default=50_000, help="number of channels")
    _common(p, True, "dataset file")

    p = sub.add_parser("train", help="train one model on a dataset file")
    p.add_argument("--dataset", required=True)
    p.add_argument("--R", type=int, required=True, help="RF chains")
    p.add_argument("--max-epochs", type=int, default=200)
    p.add_argument("--freeze-encoder", action="store_true", help="keep the conventional measurement matrix")
    _common(p, True, "model file")

    p = sub.add_parser("train-all", help="train every region of a registry")
    _sim_args(p)
    p.add_argument("--R", type=int, default=16)
    p.add_argument("--beta", type=float, default=5.0, help="region width (deg)")
    p.add_argument("--gps-err", type=float, default=1.0)
    p.add_argument("--count", type=int, default=50_000)
    p.add_argument("--max-epochs", type=int, default=200)
    _common(p, True, "registry directory")

    p = sub.add_parser("select", help="pick the network serving an azimuth")
    p.add_argument("--az-deg", type=float, required=True)
    p.add_argument("--registry", required=True)
    _common(p)

    p = sub.add_parser("estimate", help="estimate a channel with the registry")
    p.add_argument("--az-deg", type=float, required=True)
    p.add_argument("--registry", required=True)
    p.add_argument("--observations", help=".npy file of decorrelated observations (M x R); "
                                          "omit to simulate a channel at --az-deg")
    p.add_argument("--snr", type=float, default=20.0)
    p.add_argument("--M", type=int, default=4)
    p.add_argument("--Np", type=int, default=20)
    p.add_argument("--delta-theta", type=float, default=5.0)
    _common(p, out_help=".npz with x_hat and h_hat")

    p = sub.add_parser("bench", help="run a named experiment")
    p.add_argument("experiment", choices=sorted(EXPERIMENTS))
    g = p.add_mutually_exclusive_group()
    g.add_argument("--quick", dest="profile", action="store_const", const="quick")
    g.add_argument("--paper", dest="profile", action="store_const", const="paper")
    p.add_argument("--n-test", type=int, help="test channels (default 1000)")
    p.add_argument("--cache", help="directory for trained models")
    _common(p, out_help="CSV file")
    p.set_defaults(profile="quick")

    p = sub.add_parser("energy-profile", help="column energies of a model's measurement matrix")
    p.add_argument("--model", required=True)
    p.add_argument("--n-mc", type=int, default=10_000)
    _common(p, out_help="CSV file")
    return parser


# --------------------------------------------------------------------------


def cmd_gen_dataset(a):
    params = default_params(a.N, a.M, a.Np, a.delta_theta)
    region = region_for(a.region_start, a.region_end, a.gps_err)
    ds = gen_dataset(region, params, a.count, a.snr, a.seed)
    write_dataset(ds, a.out)
    print(f"wrote {len(ds)} samples to {a.out}")


def cmd_train(a):
    ds = read_dataset(a.dataset)
    h = ds.header
    sigma2 = snr_to_sigma2(h["snr_db"])
    cfg = TrainConfig(seed=a.seed, max_epochs=a.max_epochs, freeze_encoder=a.freeze_encoder)
    model, report = train(ds, cfg, conventional_config(h["N"], a.R, sigma2))
    save_model(
        model, a.out,
        region_start_deg=h["region_start_deg"], region_end_deg=h["region_end_deg"],
        delta_theta_deg=h["delta_theta_deg"], snr_train_db=h["snr_db"],
    )
    print(f"epochs {report.stopped_epoch} best_val_loss {report.best_val_loss:.6g} -> {a.out}")


def cmd_train_all(a):
    rcfg = RegistryConfig(beta_deg=a.beta, gps_err_deg=a.gps_err)
    registry = Registry.empty(rcfg)
    params = default_params(a.N, a.M, a.Np, a.delta_theta)
    sigma2 = snr_to_sigma2(a.snr)
    for region in registry.regions:
        # each region gets its own seed so training sets are disjoint
        ds = gen_dataset(region, params, a.count, a.snr, a.seed + region.index)
        cfg = TrainConfig(seed=a.seed + region.index, max_epochs=a.max_epochs)
        model, report = train(ds, cfg, conventional_config(a.N, a.R, sigma2))
        model.meta.update(delta_theta_deg=a.delta_theta, snr_train_db=a.snr)
        registry.models[region.index] = model
        print(f"region {region.index} [{region.theta_start:g},{region.theta_end:g}] "
              f"val {report.best_val_loss:.6g}")
    print(f"wrote {registry_save(registry, a.out)}")


def _selection_text(az, sel, path):
    return (
        f"azimuth_deg: {az:g}\n"
        f"region_index: {sel.region_index}\n"
        f"conjugate_flag: {str(sel.conjugate_flag).lower()}\n"
        f"effective_azimuth_deg: {sel.effective_azimuth_deg:g}\n"
        f"model_path: {path}\n"
    )


def cmd_select(a):
    registry = registry_load(a.registry, load_models=False)
    sel = registry.select(a.az_deg)
    text = _selection_text(a.az_deg, sel, registry.paths[sel.region_index])
    sys.stdout.write(text)
    if a.out:
        Path(a.out).write_text(text)


def cmd_estimate(a):
    registry = registry_load(a.registry, load_models=False)
    sel = registry.select(a.az_deg)
    model = load_model(registry.paths[sel.region_index])
    H = None
    if a.observations:
        Y = np.atleast_2d(np.load(a.observations))
    else:
        # simulate a user at the requested azimuth
        params = default_params(model.n, a.M, a.Np, a.delta_theta)
        _, H = _draw_channel(params, a.az_deg, a.az_deg, stream(a.seed, TEST, 0))
        cfg = export_measurement(model, snr_to_sigma2(a.snr))
        if sel.conjugate_flag:
            cfg = MeasurementConfig(cfg.w_rf.conj(), np.conj(cfg.w_bb), cfg.sigma2)
        _, ys = observe_block(H, cfg, dft_pilot(a.M), stream(a.seed, TEST_NOISE, 0))
        Y = ys.T
    x_hat, h_hat = estimate(model, Y, conjugate_flag=sel.conjugate_flag)
    sys.stdout.write(_selection_text(a.az_deg, sel, registry.paths[sel.region_index]))
    if H is not None:
        print(f"nmse: {nmse(h_hat.T, H):.6g}")
    if a.out:
        np.savez(a.out, x_hat=x_hat.T, h_hat=h_hat.T)


def cmd_bench(a):
    profile = PROFILES[a.profile]
    spec = ExperimentSpec(a.experiment, profile=profile, seed=a.seed, n_test=a.n_test,
                          cache_dir=a.cache, output=a.out)
    rows = EXPERIMENTS[a.experiment](spec)
    out = a.out or f"{a.experiment}_{profile.name}.csv"
    write_csv(rows, out)
    for r in sorted(rows, key=lambda r: r.key()):
        print(f"{r.solver:6s} {r.phi:14s} N={r.N:<3d} R={r.R:<3d} {r.region:10s} nmse={r.nmse:.5g}")
    print(f"wrote {out}")


def cmd_energy_profile(a):
    model = load_model(a.model)
    prof = run_energy_profile(model, a.n_mc, a.seed, a.out)
    k = int(np.argmax(prof["mean_abs_x"]))
    print(f"peak |x| bin {k}; learned energy max bin {int(np.argmax(prof['learned_energy']))}")
    if a.out:
        print(f"wrote {a.out}")


COMMANDS = {
    "gen-dataset": cmd_gen_dataset,
    "train": cmd_train,
    "train-all": cmd_train_all,
    "select": cmd_select,
    "estimate": cmd_estimate,
    "bench": cmd_bench,
    "energy-profile": cmd_energy_profile,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(message)s")
    try:
        COMMANDS[args.command](args)
    except (ValueError, RuntimeError, OSError, KeyError) as e:
        print(f"hadce: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
