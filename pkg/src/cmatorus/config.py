"""Run configuration: an INI file with sections, overridden by flags.

Sections and keys (camelCase, as they appear in reports):

``[problem]``
    n, m, alpha, diffMode, metricPreset, metricEps, chi, chiScale, chiEps,
    psi, psiSeed, psiAmplitude, psiPath, psiFactor, psiModulation,
    uStarPath, ulbarPath, pipeline, delta, recoveryTol
``[solver]``
    any :class:`~cmatorus.continuity.SolveConfig` key
``[outputs]``
    traceCsv, reportJson, fieldDir
``[estimates]``
    A, uPath
``[run]``
    seed
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

from .continuity import SolveConfig


class ConfigError(ValueError):
    pass


PSI_KINDS = ("manufactured", "explicit", "scaledKahlerConstant", "varphi")
CHI_KINDS = ("identity", "scaled", "kahlerPerturbed")
PIPELINES = ("auto", "direct", "monotone", "twoStage")

DEFAULTS = {
    "problem": {
        "n": "2",
        "m": "16",
        "alpha": "1",
        "diffMode": "spectral",
        "metricPreset": "flat",
        "metricEps": "",
        "chi": "identity",
        "chiScale": "1.0",
        "chiEps": "0.05",
        "psi": "manufactured",
        "psiSeed": "",
        "psiAmplitude": "0.01",
        "psiPath": "",
        "psiFactor": "0.2",
        "psiModulation": "0.3",
        "uStarPath": "",
        "ulbarPath": "",
        "pipeline": "auto",
        "delta": "0.05",
        "recoveryTol": "1e-8",
    },
    "solver": {},
    "outputs": {"traceCsv": "trace.csv", "reportJson": "report.json", "fieldDir": "fields"},
    "estimates": {"A": "1.0", "uPath": ""},
    "run": {"seed": "0"},
}

_INT_KEYS = {"n", "m", "alpha", "psiSeed", "seed"}
_FLOAT_KEYS = {"metricEps", "chiScale", "chiEps", "psiAmplitude", "psiFactor", "psiModulation", "delta", "recoveryTol", "A"}


@dataclass
class RunConfig:
    values: dict
    solver: SolveConfig
    base_dir: Path

    def get(self, section: str, key: str):
        raw = self.values[section][key]
        if raw == "":
            return None
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        return raw

    @property
    def seed(self) -> int:
        return self.get("run", "seed")

    @property
    def psi_seed(self) -> int:
        s = self.get("problem", "psiSeed")
        return self.seed if s is None else s

    def path(self, section: str, key: str) -> Path | None:
        raw = self.get(section, key)
        if raw is None:
            return None
        p = Path(raw)
        return p if p.is_absolute() else self.base_dir / p

    def echo(self) -> dict:
        """Fully resolved configuration, typed, for embedding in reports."""
        out = {}
        for section, entries in self.values.items():
            if section == "solver":
                continue
            out[section] = {k: self.get(section, k) for k in sorted(entries)}
        out["solver"] = self.solver.to_dict()
        return out


def _split_override(item: str) -> tuple[str, str, str]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not key=value")
    key, value = item.split("=", 1)
    key = key.strip()
    if "." in key:
        section, key = key.split(".", 1)
        return section, key, value.strip()
    owners = [s for s, entries in DEFAULTS.items() if key in entries]
    if key in SolveConfig.KEYS:
        owners.append("solver")
    if len(owners) != 1:
        raise ConfigError(f"override key {key!r} is unknown or ambiguous; use section.key")
    return owners[0], key, value.strip()


def load(path=None, overrides=(), base_dir=None) -> RunConfig:
    """Read ``path`` (optional), apply ``section.key=value`` overrides, validate.

    Raises
    ------
    ConfigError
        On unreadable files, unknown keys or invalid values.
    """
    values = {s: dict(v) for s, v in DEFAULTS.items()}
    base = Path(base_dir) if base_dir else Path.cwd()
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        base = Path(path).resolve().parent if base_dir is None else base
        for section in parser.sections():
            if section not in values:
                raise ConfigError(f"unknown config section [{section}]")
            for key, value in parser.items(section):
                _set(values, section, key, value)
    for item in overrides:
        _set(values, *_split_override(item))
    try:
        solver = SolveConfig.from_mapping(values["solver"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid solver options: {exc}") from None
    cfg = RunConfig(values, solver, base)
    _validate(cfg)
    return cfg


def _set(values: dict, section: str, key: str, value: str) -> None:
    if section not in values:
        raise ConfigError(f"unknown config section [{section}]")
    if section != "solver" and key not in values[section]:
        raise ConfigError(f"unknown key {key!r} in [{section}]")
    values[section][key] = value


def _validate(cfg: RunConfig) -> None:
    try:
        for section, entries in cfg.values.items():
            if section != "solver":
                for key in entries:
                    cfg.get(section, key)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.get("problem", "psi") not in PSI_KINDS:
        raise ConfigError(f"psi must be one of {PSI_KINDS}")
    if cfg.get("problem", "chi") not in CHI_KINDS:
        raise ConfigError(f"chi must be one of {CHI_KINDS}")
    if cfg.get("problem", "pipeline") not in PIPELINES:
        raise ConfigError(f"pipeline must be one of {PIPELINES}")
    if cfg.get("problem", "psi") == "explicit" and cfg.get("problem", "psiPath") is None:
        raise ConfigError("psi = explicit needs psiPath")
    if cfg.seed < 0 or cfg.seed >= 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
