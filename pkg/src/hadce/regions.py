"""Angular-space segmentation, azimuth folding and the model registry.

Only azimuths in [0, 90] degrees get their own network. An azimuth in
[90, 180] shares the sine (hence the steering vectors) of ``180 - theta``;
a negative-sine azimuth is served by the network of its reflection with
conjugated combiners and a conjugated estimate.

All angles in this module are degrees.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import conjugate_recover  # noqa: F401  (re-exported)
from .measurement import AnalogMatrix, MeasurementConfig
from .neural.io import atomic_write_text, load_model, save_model

REGISTRY_FORMAT_VERSION = 1
INDEX_NAME = "registry.json"


class RegistryError(RuntimeError):
    pass


def n_networks(beta_deg):
    """Number of regions needed to tile [0, 90] with width ``beta_deg``."""
    if beta_deg <= 0:
        raise ValueError(f"region width must be positive, got {beta_deg}")
    # Round first so e.g. 90 / 0.1 = 900.0000000000001 still gives 900.
    return math.ceil(round(90.0 / beta_deg, 9))


@dataclass(frozen=True)
class Region:
    index: int
    theta_start: float
    theta_end: float
    expanded_start: float
    expanded_end: float

    def contains(self, theta_deg, last=False):
        if last:
            return self.theta_start <= theta_deg <= self.theta_end
        return self.theta_start <= theta_deg < self.theta_end


@dataclass(frozen=True)
class RegistryConfig:
    beta_deg: float = 5.0
    gps_err_deg: float = 1.0

    def __post_init__(self):
        if not 0 < self.beta_deg <= 90:
            raise ValueError(f"beta_deg must be in (0, 90], got {self.beta_deg}")
        if self.gps_err_deg < 0:
            raise ValueError(f"gps_err_deg must be >= 0, got {self.gps_err_deg}")

    @property
    def n_net(self):
        return n_networks(self.beta_deg)


@dataclass(frozen=True)
class Selection:
    region_index: int
    conjugate_flag: bool
    effective_azimuth_deg: float


def segment(cfg):
    """Contiguous regions of width beta covering [0, 90]; the last may be narrower."""
    if cfg.beta_deg <= 0:
        raise ValueError(f"region width must be positive, got {cfg.beta_deg}")
    n = cfg.n_net
    regions = []
    for i in range(n):
        start = i * cfg.beta_deg
        end = min((i + 1) * cfg.beta_deg, 90.0) if i < n - 1 else 90.0
        regions.append(
            Region(i, start, end, start - cfg.gps_err_deg, end + cfg.gps_err_deg)
        )
    return regions


def normalize_azimuth(theta_deg):
    """Wrap to (-180, 180]."""
    t = math.fmod(theta_deg, 360.0)
    if t > 180.0:
        t -= 360.0
    elif t <= -180.0:
        t += 360.0
    return t


def fold_azimuth(theta_az_deg):
    """Map any azimuth to ``(folded, conjugate_flag)`` with folded in [0, 90].

    ``sin(folded) == |sin(theta)|`` and the flag is set for negative sines.
    Exactly -90 degrees folds to (90, False): its steering vector equals
    that of +90.
    """
    t = normalize_azimuth(theta_az_deg)
    conj = False
    if t < 0:
        if t == -90.0:
            return 90.0, False
        t = -t
        conj = True
    folded = 180.0 - t if t > 90.0 else t
    return folded, conj


def locate(regions, theta_deg):
    """Index of the region containing a folded azimuth (half-open bins)."""
    for k, region in enumerate(regions):
        if region.contains(theta_deg, last=(k == len(regions) - 1)):
            return region.index
    raise ValueError(f"azimuth {theta_deg} is outside [0, 90]")


def azimuth_from_coords(bs_xy, user_xy, array_boresight_deg=0.0):
    """Planar bearing of the user seen from the BS, relative to boresight."""
    dx = user_xy[0] - bs_xy[0]
    dy = user_xy[1] - bs_xy[1]
    if dx == 0 and dy == 0:
        raise ValueError("BS and user positions coincide")
    bearing = math.degrees(math.atan2(dy, dx))
    return normalize_azimuth(bearing - array_boresight_deg)


def mirror_measurement(w_rf, w_bb=None):
    """Conjugate combiners for the mirrored user.

    Accepts either a ``MeasurementConfig``, an ``(AnalogMatrix, W_BB)``
    pair, or a single complex matrix (e.g. ``Phi B^H``).
    """
    if isinstance(w_rf, MeasurementConfig):
        cfg = w_rf
        return MeasurementConfig(w_rf=cfg.w_rf.conj(), w_bb=np.conj(cfg.w_bb), sigma2=cfg.sigma2)
    if isinstance(w_rf, AnalogMatrix):
        return w_rf.conj(), np.conj(w_bb)
    if w_bb is None:
        return np.conj(w_rf)
    return np.conj(w_rf), np.conj(w_bb)


def mirrored_phi(phi1, basis):
    """``Phi2 = (Phi1 B^H)^* B``."""
    return np.conj(phi1 @ basis.b.conj().T) @ basis.b


# --------------------------------------------------------------------------
# Registry


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class Registry:
    """Per-region models plus the segmentation that maps azimuths to them."""

    config: RegistryConfig
    regions: list
    models: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)

    @classmethod
    def empty(cls, config):
        return cls(config=config, regions=segment(config))

    def select(self, theta_az_deg):
        return select(theta_az_deg, self)

    def model_for(self, selection):
        return self.models[selection.region_index]


def select(theta_az_deg, registry):
    """Fold the azimuth and return the region whose model serves it."""
    folded, conj = fold_azimuth(theta_az_deg)
    k = locate(registry.regions, folded)
    if k not in registry.models and k not in registry.paths:
        raise RegistryError(f"no model for region {k}")
    return Selection(region_index=k, conjugate_flag=conj, effective_azimuth_deg=folded)


def registry_save(registry, directory):
    """Write one model file per region, then the index (atomically, last)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    cfg = registry.config
    for region in registry.regions:
        model = registry.models.get(region.index)
        if model is None:
            raise RegistryError(f"no model for region {region.index}")
        name = f"region_{region.index}.model"
        save_model(
            model,
            directory / name,
            region_start_deg=region.theta_start,
            region_end_deg=region.theta_end,
        )
        entries.append(
            {
                "index": region.index,
                "theta_start": region.theta_start,
                "theta_end": region.theta_end,
                "expanded_start": region.expanded_start,
                "expanded_end": region.expanded_end,
                "model_file": name,
                "sha256": _sha256(directory / name),
            }
        )
    index = {
        "format_version": REGISTRY_FORMAT_VERSION,
        "beta_deg": cfg.beta_deg,
        "gps_err_deg": cfg.gps_err_deg,
        "n_net": cfg.n_net,
        "regions": entries,
    }
    atomic_write_text(directory / INDEX_NAME, json.dumps(index, indent=1))
    registry.paths = {e["index"]: directory / e["model_file"] for e in entries}
    return directory / INDEX_NAME


def registry_load(directory, load_models=True):
    """Read and validate a registry directory.

    Checks the format version, that ``n_net`` matches the region width,
    that regions tile [0, 90] contiguously, and every model file's checksum.
    """
    directory = Path(directory)
    index_path = directory / INDEX_NAME
    if not index_path.exists():
        raise RegistryError(f"{index_path} not found")
    index = json.loads(index_path.read_text(encoding="utf-8"))
    if index.get("format_version") != REGISTRY_FORMAT_VERSION:
        raise RegistryError(f"unsupported registry format_version {index.get('format_version')!r}")
    cfg = RegistryConfig(beta_deg=index["beta_deg"], gps_err_deg=index["gps_err_deg"])
    if index["n_net"] != cfg.n_net:
        raise RegistryError(
            f"n_net={index['n_net']} does not match ceil(90/beta)={cfg.n_net}"
        )
    entries = sorted(index["regions"], key=lambda e: e["index"])
    expected = segment(cfg)
    if len(entries) != len(expected):
        raise RegistryError(f"index lists {len(entries)} regions, expected {len(expected)}")
    for e, r in zip(entries, expected):
        if e["index"] != r.index or not (
            math.isclose(e["theta_start"], r.theta_start, abs_tol=1e-9)
            and math.isclose(e["theta_end"], r.theta_end, abs_tol=1e-9)
        ):
            raise RegistryError(f"region {e['index']} does not tile [0, 90] as expected")
    registry = Registry(config=cfg, regions=expected)
    for e in entries:
        path = directory / e["model_file"]
        if not path.exists():
            raise RegistryError(f"model file for region {e['index']} missing: {path}")
        if _sha256(path) != e["sha256"]:
            raise RegistryError(f"checksum mismatch for region {e['index']} ({path})")
        registry.paths[e["index"]] = path
        if load_models:
            registry.models[e["index"]] = load_model(path)
    return registry
