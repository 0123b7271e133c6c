"""Run configuration: typed defaults, key=value files and command-line overrides.

Keys are dotted ``section.name`` strings.  A config file holds one
``key = value`` per line; blank lines and ``#`` comments are ignored.
Values are parsed to the type of the default.  Later sources win: defaults,
then the file, then ``--set key=value`` flags, then dedicated flags such as
``--seed`` and ``--threads``.
"""
from __future__ import annotations

import os
from dataclasses import fields
from pathlib import Path

from .classifiers import ErtParams, GbParams, LogregParams, SvmParams
from .errors import InvalidParameterError
from .infection import InfectionParams
from .lung import GateParams
from .wam import WamWeights

THREADS_ENV = "CTSEV_THREADS"

DEFAULTS: dict[str, object] = {
    "seed": 0,
    "threads": 1,
    "verbosity": "info",
    "lung.source": "external",
    "lung.air_cutoff": 0.35,
    "gate.min_mask_area": GateParams.min_mask_area,
    "gate.large_area_fraction": GateParams.large_area_fraction,
    "infection.c": InfectionParams.c,
    "infection.sigma": InfectionParams.sigma,
    "infection.band_lo": InfectionParams.band_lo,
    "infection.band_hi": InfectionParams.band_hi,
    "infection.noise_min_area": InfectionParams.noise_min_area,
    "infection.vessel_min_area": InfectionParams.vessel_min_area,
    "infection.otsu_guard": InfectionParams.otsu_guard,
    "wam.right": WamWeights.right,
    "wam.left": WamWeights.left,
    "ert.n_trees": ErtParams.n_trees,
    "ert.k_features": ErtParams.k_features,
    "ert.min_samples_split": ErtParams.min_samples_split,
    "gboost.n_rounds": GbParams.n_rounds,
    "gboost.learning_rate": GbParams.learning_rate,
    "gboost.max_depth": GbParams.max_depth,
    "gboost.min_samples_leaf": GbParams.min_samples_leaf,
    "svm.kernel": SvmParams.kernel,
    "svm.gamma": "auto",
    "svm.C": SvmParams.C,
    "svm.tol": SvmParams.tol,
    "svm.max_iter": SvmParams.max_iter,
    "svm.class_weight": "none",
    "knn.k": 5,
    "logreg.learning_rate": LogregParams.learning_rate,
    "logreg.epochs": LogregParams.epochs,
    "logreg.l2": LogregParams.l2,
    "ensemble.priority": "gboost,ert,svm",
    "phantom.per_class": 50,
    "phantom.size": 512,
    "phantom.slices_min": 27,
    "phantom.slices_max": 36,
    "phantom.noise": 0.01,
    "phantom.vessel_density": 2,
}


def _parse(key: str, raw: str):
    default = DEFAULTS[key]
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise InvalidParameterError(f"config key {key}: cannot parse {raw!r} as {type(default).__name__}") from None
    return raw


class RunConfig:
    """Resolved configuration; behaves like a read-only mapping."""

    def __init__(self, values: dict | None = None):
        self._values = dict(DEFAULTS)
        for k, v in (values or {}).items():
            self.set(k, v)

    def set(self, key: str, value) -> None:
        if key not in DEFAULTS:
            raise InvalidParameterError(f"unknown config key {key!r}")
        self._values[key] = _parse(key, value) if isinstance(value, str) else value

    def __getitem__(self, key):
        return self._values[key]

    def items(self):
        return sorted(self._values.items())

    def update_from_file(self, path) -> None:
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise InvalidParameterError(f"cannot read config file {path}: {exc}") from exc
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidParameterError(f"{path}:{lineno}: expected key = value")
            key, value = line.split("=", 1)
            self.set(key.strip(), value)

    def update_from_pairs(self, pairs) -> None:
        for pair in pairs or ():
            if "=" not in pair:
                raise InvalidParameterError(f"--set expects key=value, got {pair!r}")
            key, value = pair.split("=", 1)
            self.set(key.strip(), value)

    def dumps(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.items())

    def echo(self, directory) -> Path:
        """Write the resolved configuration to ``directory/config.txt``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / "config.txt"
        path.write_text(self.dumps())
        return path

    # -- parameter blocks ------------------------------------------------

    def _block(self, cls, section, **extra):
        kw = {}
        for f in fields(cls):
            key = f"{section}.{f.name}"
            if key in self._values:
                kw[f.name] = self._values[key]
        kw.update(extra)
        return cls(**kw)

    def gate_params(self) -> GateParams:
        return self._block(GateParams, "gate")

    def infection_params(self) -> InfectionParams:
        return self._block(InfectionParams, "infection")

    def wam_weights(self) -> WamWeights:
        return self._block(WamWeights, "wam")

    def ert_params(self) -> ErtParams:
        return self._block(ErtParams, "ert", seed=self["seed"])

    def gb_params(self) -> GbParams:
        return self._block(GbParams, "gboost", seed=self["seed"])

    def svm_params(self) -> SvmParams:
        gamma = self["svm.gamma"]
        gamma = None if str(gamma).lower() == "auto" else float(gamma)
        cw = self["svm.class_weight"]
        cw = None if str(cw).lower() == "none" else cw
        return self._block(SvmParams, "svm", gamma=gamma, class_weight=cw)

    def logreg_params(self) -> LogregParams:
        return self._block(LogregParams, "logreg")

    def priority(self) -> tuple[str, ...]:
        return tuple(p.strip() for p in str(self["ensemble.priority"]).split(","))


def resolve(config_file=None, set_pairs=None, seed=None, threads=None) -> RunConfig:
    """Defaults < config file < environment < ``--set`` < dedicated flags."""
    cfg = RunConfig()
    if config_file is not None:
        cfg.update_from_file(config_file)
    env = os.environ.get(THREADS_ENV)
    if env:
        cfg.set("threads", env)
    cfg.update_from_pairs(set_pairs)
    if seed is not None:
        cfg.set("seed", int(seed))
    if threads is not None:
        cfg.set("threads", int(threads))
    if cfg["threads"] < 1:
        raise InvalidParameterError("threads must be >= 1")
    return cfg
