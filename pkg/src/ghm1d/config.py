"""Run configuration: INI-style text in, validated RunConfig out.

The format is deliberately small: [section] headers, key = value lines,
'#' or ';' comments.  The reader is hand-rolled rather than built on
configparser because every rejection must name the offending key and
its line number, which configparser does not track.

An empty config is a full default run (chi=80, M=100, U=-8, t=1).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json

from .errors import ConfigError
from .itebd import ScheduleStage
from .model import ModelParams
from .trap import ClassifierThresholds

__all__ = [
    "RunConfig",
    "parse_config",
    "serialize_config",
    "build_manifest",
    "write_manifest",
    "sha256_file",
]

DEFAULT_SCHEDULE_DTAU = (0.1, 0.05, 0.02, 0.01, 0.005, 0.001)


def _fmt(x: float) -> str:
    return "%.17g" % float(x)


@dataclasses.dataclass(frozen=True)
class RunConfig:
    model: ModelParams = ModelParams()
    chi: int = 80
    cutoff: float = 1e-12
    seed: int = 7
    schedule_dtau: tuple = DEFAULT_SCHEDULE_DTAU
    schedule_max_steps: int = 20000
    schedule_tol_scale: float = 1e-9
    m: int = 100
    k_points: int = 512
    thresholds: ClassifierThresholds = ClassifierThresholds()
    out_dir: str | None = None

    def schedule(self) -> list:
        return [ScheduleStage(dtau, self.schedule_max_steps,
                              self.schedule_tol_scale * dtau)
                for dtau in self.schedule_dtau]

    def replace(self, **kwargs) -> "RunConfig":
        return dataclasses.replace(self, **kwargs)


_SCHEMA = {
    "model": {"t": float, "delta_g": float, "delta_t": float, "U": float,
              "mu": float, "delta_mu": float},
    "engine": {"chi": int, "cutoff": float, "seed": int,
               "schedule_dtau": "float_list", "schedule_max_steps": int,
               "schedule_tol_scale": float},
    "observables": {"m": int, "k_points": int},
    "classifier": {"k_min": float, "p_min": float, "ratio_threshold": float,
                   "n_vacuum": float, "n_band": float},
    "output": {"out_dir": str},
}


def _convert(raw: str, kind, key: str, line_no: int):
    try:
        if kind is float:
            value = float(raw)
            if value != value or value in (float("inf"), float("-inf")):
                raise ValueError("not finite")
            return value
        if kind is int:
            return int(raw, 10)
        if kind == "float_list":
            return tuple(float(part) for part in raw.split(",") if part.strip())
        return raw
    except ValueError as exc:
        raise ConfigError(f"line {line_no}: key '{key}' has invalid value "
                          f"{raw!r} ({exc})") from exc


def parse_config(text: str) -> RunConfig:
    """Validated config from key=value text; unknown keys are rejected."""
    section = None
    values: dict = {}
    lines: dict = {}
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SCHEMA:
                raise ConfigError(f"line {line_no}: unknown section "
                                  f"[{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected 'key = value', "
                              f"got {line!r}")
        key, _, raw_value = line.partition("=")
        key = key.strip()
        raw_value = raw_value.split("#")[0].strip()
        if section is None:
            raise ConfigError(f"line {line_no}: key '{key}' appears before "
                              f"any [section] header")
        if key not in _SCHEMA[section]:
            raise ConfigError(f"line {line_no}: unknown key '{key}' in "
                              f"section [{section}]")
        if (section, key) in values:
            raise ConfigError(f"line {line_no}: duplicate key '{key}' in "
                              f"section [{section}] (first set on line "
                              f"{lines[(section, key)]})")
        values[(section, key)] = _convert(raw_value, _SCHEMA[section][key],
                                          key, line_no)
        lines[(section, key)] = line_no

    def get(section, key, default):
        return values.get((section, key), default)

    def fail(key, message):
        raise ConfigError(f"key '{key}': {message}")

    try:
        model = ModelParams.from_mu(
            t=get("model", "t", 1.0),
            delta_g=get("model", "delta_g", 0.0),
            delta_t=get("model", "delta_t", 0.0),
            U=get("model", "U", -8.0),
            mu=get("model", "mu", -4.0),
            delta_mu=get("model", "delta_mu", 0.0))
    except ValueError as exc:
        raise ConfigError(f"section [model]: {exc}") from exc

    chi = get("engine", "chi", 80)
    if chi < 1:
        fail("chi", f"must be >= 1, got {chi}")
    cutoff = get("engine", "cutoff", 1e-12)
    if not 0 <= cutoff < 1:
        fail("cutoff", f"must be in [0, 1), got {cutoff}")
    seed = get("engine", "seed", 7)
    dtau = get("engine", "schedule_dtau", DEFAULT_SCHEDULE_DTAU)
    if not dtau or any(d <= 0 for d in dtau):
        fail("schedule_dtau", f"needs positive entries, got {dtau}")
    if any(b >= a for a, b in zip(dtau, dtau[1:])):
        fail("schedule_dtau", f"must strictly decrease, got {dtau}")
    max_steps = get("engine", "schedule_max_steps", 20000)
    if max_steps < 1:
        fail("schedule_max_steps", f"must be >= 1, got {max_steps}")
    tol_scale = get("engine", "schedule_tol_scale", 1e-9)
    if tol_scale <= 0:
        fail("schedule_tol_scale", f"must be positive, got {tol_scale}")
    m = get("observables", "m", 100)
    if m < 2:
        fail("m", f"must be >= 2, got {m}")
    k_points = get("observables", "k_points", 512)
    if k_points < 2:
        fail("k_points", f"must be >= 2, got {k_points}")
    try:
        thresholds = ClassifierThresholds(
            k_min=get("classifier", "k_min",
                      ClassifierThresholds.k_min),
            p_min=get("classifier", "p_min", ClassifierThresholds.p_min),
            ratio_threshold=get("classifier", "ratio_threshold",
                                ClassifierThresholds.ratio_threshold),
            n_vacuum=get("classifier", "n_vacuum",
                         ClassifierThresholds.n_vacuum),
            n_band=get("classifier", "n_band", ClassifierThresholds.n_band))
    except ValueError as exc:
        raise ConfigError(f"section [classifier]: {exc}") from exc
    return RunConfig(model=model, chi=chi, cutoff=cutoff, seed=seed,
                     schedule_dtau=tuple(dtau),
                     schedule_max_steps=max_steps,
                     schedule_tol_scale=tol_scale, m=m, k_points=k_points,
                     thresholds=thresholds,
                     out_dir=get("output", "out_dir", None))


def serialize_config(config: RunConfig) -> str:
    """Canonical text form; parse_config(serialize_config(c)) == c."""
    th = config.thresholds
    lines = [
        "[model]",
        f"t = {_fmt(config.model.t)}",
        f"delta_g = {_fmt(config.model.delta_g)}",
        f"delta_t = {_fmt(config.model.delta_t)}",
        f"U = {_fmt(config.model.U)}",
        f"mu = {_fmt(config.model.mu)}",
        f"delta_mu = {_fmt(config.model.delta_mu)}",
        "",
        "[engine]",
        f"chi = {config.chi}",
        f"cutoff = {_fmt(config.cutoff)}",
        f"seed = {config.seed}",
        "schedule_dtau = " + ",".join(_fmt(d) for d in config.schedule_dtau),
        f"schedule_max_steps = {config.schedule_max_steps}",
        f"schedule_tol_scale = {_fmt(config.schedule_tol_scale)}",
        "",
        "[observables]",
        f"m = {config.m}",
        f"k_points = {config.k_points}",
        "",
        "[classifier]",
        f"k_min = {_fmt(th.k_min)}",
        f"p_min = {_fmt(th.p_min)}",
        f"ratio_threshold = {_fmt(th.ratio_threshold)}",
        f"n_vacuum = {_fmt(th.n_vacuum)}",
        f"n_band = {_fmt(th.n_band)}",
    ]
    if config.out_dir is not None:
        lines += ["", "[output]", f"out_dir = {config.out_dir}"]
    return "\n".join(lines) + "\n"


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def build_manifest(config: RunConfig, command: str, files: dict,
                   reports: dict | None = None,
                   wall_times: dict | None = None) -> dict:
    """files maps artifact name -> path on disk; checksums are computed."""
    from . import __version__
    return {
        "command": command,
        "code_version": __version__,
        "seed": config.seed,
        "config": serialize_config(config),
        "files": {name: sha256_file(path) for name, path in sorted(
            files.items())},
        "convergence": reports or {},
        "wall_times_s": wall_times or {},
    }


def write_manifest(path, manifest: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
