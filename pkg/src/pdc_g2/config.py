"""
Run configuration: a schema-checked JSON document, built from a compiled-in
preset, an optional JSON file and command-line overrides, in that order.
PDC_G2_SEED overrides the seed of the preset and file (not of --seed).
"""
import copy
import json
import logging
import os
from typing import Any, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import ConfigInvalid
from .estimators.counts import default_tau_grid, default_window
from .model.gaussian import build_biphoton
from .model.params import (
    PPKTP_LENGTH_MM,
    PPKTP_POLING_UM,
    PPKTP_PUMP_WAVELENGTH_NM,
    PPKTP_TAU_E,
    PPKTP_TAU_O,
    SIGMA_S,
    PdcParams,
    derive_params,
)
from .oracle.checks import OracleTolerances
from .sim.detection import DEFAULT_CHUNK_SIZE, MAX_MEAN_PAIRS, ExperimentConfig

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SEED_ENV = "PDC_G2_SEED"
RESOLVED_NAME = "resolved_config.json"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class CrystalConfig(_Section):
    # ps
    pump_fwhm: float = Field(30.0, gt=0)
    tau_o: float = PPKTP_TAU_O
    tau_e: float = PPKTP_TAU_E
    sigma_s: float = Field(SIGMA_S, gt=0)
    # mm, um, nm
    crystal_length: Optional[float] = PPKTP_LENGTH_MM
    poling_period: Optional[float] = PPKTP_POLING_UM
    pump_wavelength: Optional[float] = PPKTP_PUMP_WAVELENGTH_NM

    def to_params(self, pump_fwhm: Optional[float] = None) -> PdcParams:
        return derive_params(
            self.pump_fwhm if pump_fwhm is None else pump_fwhm,
            self.tau_o, self.tau_e, self.sigma_s,
            crystal_length=self.crystal_length,
            poling_period=self.poling_period,
            pump_wavelength=self.pump_wavelength,
        )


class ExperimentSection(_Section):
    mean_pairs: float = Field(0.1, gt=0, le=MAX_MEAN_PAIRS)
    magnification: float = 1000.0
    # MHz
    repetition_rate: float = Field(10.0, gt=0)
    n_pulses: int = Field(1_000_000, ge=0)
    # ps
    jitter_sigma: float = Field(0.0, ge=0)
    herald_efficiency: float = Field(1.0, ge=0, le=1)
    seed: int = Field(0, ge=0, lt=2 ** 64)
    chunk_size: int = Field(DEFAULT_CHUNK_SIZE, gt=0)


class EstimatorSection(_Section):
    # ns; None means repetition period / 200
    window: Optional[float] = Field(None, gt=0)
    # ns; None means +-period/4 in steps of the window
    tau_span: Optional[float] = Field(None, gt=0)
    tau_step: Optional[float] = Field(None, gt=0)
    min_counts: int = Field(10, ge=1)
    bootstrap: int = Field(0, ge=0)
    # pulse blocks for the standard error of C; below 2 disables it
    jackknife: int = Field(16, ge=0)


class OracleSection(_Section):
    grid_size: int = Field(512, ge=2)
    presets: List[str] = ["ppktp-3ps", "ppktp-30ps"]
    svd_gaussian: float = 1e-2
    svd_sinc: float = 0.1
    jta_pointwise: float = 1e-6
    parseval: float = 1e-9
    g1: float = 1e-4
    gaussian_integral: float = 1e-8
    mehler: float = 1e-6

    def tolerances(self) -> OracleTolerances:
        return OracleTolerances(**self.model_dump(exclude={"grid_size", "presets"}))


class SweepSection(_Section):
    # ps
    pump_min: float = Field(0.3, gt=0)
    pump_max: float = Field(30.0, gt=0)
    count: int = Field(201, ge=2)
    log_spaced: bool = True


class RunConfig(_Section):
    schema_version: Literal[1] = SCHEMA_VERSION
    preset: Optional[str] = None
    out_dir: str = "out"
    threads: int = Field(1, ge=1)
    format: Literal["csv", "json"] = "csv"
    crystal: CrystalConfig = Field(default_factory=CrystalConfig)
    experiment: ExperimentSection = Field(default_factory=ExperimentSection)
    estimator: EstimatorSection = Field(default_factory=EstimatorSection)
    oracle: OracleSection = Field(default_factory=OracleSection)
    sweep: SweepSection = Field(default_factory=SweepSection)

    def params(self) -> PdcParams:
        return self.crystal.to_params()

    def experiment_config(self) -> ExperimentConfig:
        e = self.experiment
        return ExperimentConfig(
            biphoton=build_biphoton(self.params()),
            mean_pairs=e.mean_pairs,
            magnification=e.magnification,
            repetition_rate=e.repetition_rate,
            n_pulses=e.n_pulses,
            jitter_sigma=e.jitter_sigma,
            herald_efficiency=e.herald_efficiency,
            seed=e.seed,
            chunk_size=e.chunk_size,
        )

    def window(self) -> float:
        period = 1e3 / self.experiment.repetition_rate
        return self.estimator.window or default_window(period)

    def tau_grid(self) -> np.ndarray:
        period = 1e3 / self.experiment.repetition_rate
        window = self.window()
        if self.estimator.tau_span is None:
            return default_tau_grid(period, window)
        step = self.estimator.tau_step or window
        n = int(self.estimator.tau_span // step)
        return step * np.arange(-n, n + 1)


PRESETS: Dict[str, Dict[str, Any]] = {
    "ppktp-30ps": {"crystal": {"pump_fwhm": 30.0}},
    "ppktp-3ps": {"crystal": {"pump_fwhm": 3.0}},
    "ppktp-0.3ps": {"crystal": {"pump_fwhm": 0.3}},
    "ppktp-30ps-heralded": {"crystal": {"pump_fwhm": 30.0}, "experiment": {"mean_pairs": 0.2}},
    # detector resolution from about 50 ps
    "ppktp-30ps-jitter": {"crystal": {"pump_fwhm": 30.0}, "experiment": {"jitter_sigma": 50.0}},
}


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def preset_dict(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigInvalid(f"unknown preset {name!r}; known: {', '.join(sorted(PRESETS))}")
    return deep_merge({"preset": name}, PRESETS[name])


def preset_params(name: str) -> PdcParams:
    return load_config(preset=name).params()


def load_config(preset: Optional[str] = None, config_path: Optional[str] = None,
                overrides: Optional[dict] = None, env: Optional[dict] = None) -> RunConfig:
    doc: dict = {}
    if preset is not None:
        doc = preset_dict(preset)
    if config_path is not None:
        try:
            with open(config_path) as f:
                file_doc = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigInvalid(f"cannot read config {config_path}: {e}") from e
        if not isinstance(file_doc, dict):
            raise ConfigInvalid(f"config {config_path} must hold a JSON object")
        if preset is None and file_doc.get("preset"):
            doc = preset_dict(file_doc["preset"])
        doc = deep_merge(doc, file_doc)

    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        try:
            seed = int(env[SEED_ENV])
        except ValueError as e:
            raise ConfigInvalid(f"{SEED_ENV}={env[SEED_ENV]!r} is not an integer") from e
        doc = deep_merge(doc, {"experiment": {"seed": seed}})
        logger.debug(f"seed {seed} from {SEED_ENV}")

    doc = deep_merge(doc, overrides or {})
    try:
        cfg = RunConfig.model_validate(doc)
    except ValidationError as e:
        raise ConfigInvalid(str(e)) from e
    # surface physics-level rejections (tau_o == tau_e, ...) as config errors
    try:
        cfg.params()
    except ValueError as e:
        raise ConfigInvalid(str(e)) from e
    return cfg


def write_resolved(cfg: RunConfig, out_dir: Optional[str] = None) -> str:
    out_dir = out_dir or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, RESOLVED_NAME)
    with open(path, "w") as f:
        json.dump(cfg.model_dump(mode="json"), f, indent=2)
    return path
