"""Pipeline configuration: a YAML key-value tree over typed defaults."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import yaml

from .displacement_pca import LossConfig, SfSConfig
from .normal_integration import MU_FINE, MU_SMOOTH
from .proxy_fit import FitConfig


@dataclass
class PathsConfig:
    model: Optional[str] = None
    dictionary: Optional[str] = None
    pca: Optional[str] = None
    landmarks: Optional[str] = None
    image: Optional[str] = None
    features: Optional[str] = None
    regions: Optional[str] = None
    region_pca: Optional[Dict[int, str]] = None
    output_dir: str = "out"


@dataclass
class ProxyConfig:
    lambda_s: float = 30.0
    max_iterations: int = 5
    convergence_tol: float = 1e-6
    contour_weight: float = 0.5

    def fit_config(self) -> FitConfig:
        return FitConfig(self.lambda_s, self.max_iterations, self.convergence_tol)


@dataclass
class PatchConfig:
    size: int = 256
    stride: int = 128
    rank: int = 64
    training_per_map: int = 32
    sampler_sigma: float = 64.0
    sampler_gain: float = 0.9


@dataclass
class IntegrationSection:
    mu_fine: float = MU_FINE
    mu_smooth: float = MU_SMOOTH


@dataclass
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    proxy: ProxyConfig = field(default_factory=ProxyConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    integration: IntegrationSection = field(default_factory=IntegrationSection)
    patch: PatchConfig = field(default_factory=PatchConfig)
    sfs: SfSConfig = field(default_factory=SfSConfig)
    texture_resolution: int = 2048
    lighting_iterations: int = 3
    color_space: str = "rgb"
    seed: int = 0

    def validate(self) -> None:
        if self.texture_resolution % 128:
            raise ValueError("texture_resolution must be a multiple of 128")
        if self.patch.stride * 2 != self.patch.size:
            raise ValueError("patch.stride must be half of patch.size")
        if self.color_space not in ("rgb", "hsv"):
            raise ValueError("color_space must be rgb or hsv")


def _merge(obj: Any, data: Dict[str, Any], where: str = "") -> Any:
    if not isinstance(data, dict):
        raise ValueError(f"config section {where or '<root>'} must be a mapping")
    names = {f.name: f for f in dataclasses.fields(obj)}
    for key, value in data.items():
        if key not in names:
            raise ValueError(f"unknown config key {where}{key}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            _merge(current, value, f"{where}{key}.")
        else:
            if isinstance(current, float) and isinstance(value, (int, float)):
                value = float(value)
            setattr(obj, key, value)
    return obj


def load_config(path: Optional[str | os.PathLike]) -> PipelineConfig:
    cfg = PipelineConfig()
    if path is not None:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        _merge(cfg, data)
        base = os.path.dirname(os.path.abspath(path))
        # Relative paths are relative to the config file.
        for f in dataclasses.fields(cfg.paths):
            value = getattr(cfg.paths, f.name)
            if isinstance(value, str):
                setattr(cfg.paths, f.name, os.path.join(base, value))
            elif isinstance(value, dict):
                setattr(cfg.paths, f.name, {int(k): os.path.join(base, v) for k, v in value.items()})
    cfg.validate()
    return cfg


DEFAULT_CONFIG_TEXT = """\
# facedetail pipeline configuration
paths:
  model: null          # morphable model container
  dictionary: null     # semantic feature -> expression dictionary (optional)
  pca: null            # displacement PCA model container
  landmarks: null      # 68-point landmark file: "index x y [weight]" per line
  image: null          # input photo (PNG or PFM)
  features: null       # precomputed semantic feature vector (optional)
  regions: null        # UV region label PNG for per-region PCA models (optional)
  region_pca: null     # {label: PCA container} used together with regions
  output_dir: out

proxy:
  lambda_s: 30.0          # shape regularizer, in std-units
  max_iterations: 5       # camera/shape alternations
  convergence_tol: 1.0e-6 # stop when max |delta alpha| falls below this
  contour_weight: 0.5     # weight of jaw-contour landmarks 0-16 (others 1)

loss:
  lambda_gan_l1: 100.0    # weight of the L1 block against the adversarial term
  eta: 0.5                # weight of the reconstruction loss inside the L1 block

integration:
  mu_fine: 1.0e-5         # depth-prior weight for the detailed surface
  mu_smooth: 1.0e-3       # depth-prior weight for the smoothed surface

patch:
  size: 256               # displacement patch edge, texels
  stride: 128             # 50% overlap at inference
  rank: 64                # PCA basis patches
  training_per_map: 32    # importance-sampled training patches per map
  sampler_sigma: 64.0     # saliency suppression window, texels
  sampler_gain: 0.9       # saliency suppression strength

sfs:
  max_iterations: 200
  rel_tol: 1.0e-6
  armijo_c: 1.0e-4
  shrink: 0.5
  grow: 2.0
  initial_step: 1.0
  min_step: 1.0e-12
  min_valid_texels: 16
  precondition: slope     # slope | none

texture_resolution: 2048  # texture map edge, texels
lighting_iterations: 3    # alternating lighting/albedo sweeps
color_space: rgb          # rgb | hsv (loss reporting only)
seed: 0
"""


def dump_config(cfg: PipelineConfig) -> str:
    return yaml.safe_dump(dataclasses.asdict(cfg), sort_keys=False)
