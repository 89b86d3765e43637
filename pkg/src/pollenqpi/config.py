"""Pipeline configuration: an INI-style key/value file with section headers.

Example::

    [pipeline]
    stages = simulate, reconstruct, analyze
    seed = 2023

    [grid]
    width = 256
    height = 256

    [reconstruct]
    method = sparse
    max_outer_iterations = 200

Unknown sections or keys are rejected so typos surface as usage errors.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .field import GridSpec
from .holosim import PopulationSpec, ReferenceWave, SensorModel
from .sparse import ReconConfig

STAGES = ("simulate", "reconstruct", "unwrap", "analyze")
METHODS = ("fourier", "sparse")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    stages: tuple[str, ...] = ("simulate", "reconstruct", "analyze")
    seed: int = 2023
    out: Path = Path("pollenqpi-run")
    workers: int = 1
    grid: GridSpec = GridSpec(256, 256)
    population: PopulationSpec = PopulationSpec()
    reference: ReferenceWave = ReferenceWave()
    sensor: SensorModel = SensorModel(bit_depth=12)
    method: str = "sparse"
    carrier: str = "known"  # or "detect"
    filter_shape: str = "circular"
    filter_fraction: float = 0.6
    recon: ReconConfig = ReconConfig()
    unwrap_frame: int = 8
    threshold: float = 6.455
    bin_width: float = 1.0
    level: str = "auto"
    bench_methods: tuple[str, ...] = METHODS
    source_text: str = field(default="", compare=False, repr=False)

    def __post_init__(self):
        bad = [s for s in self.stages if s not in STAGES]
        if bad:
            raise ConfigError(f"unknown stage(s): {', '.join(bad)}")
        for m in (self.method, *self.bench_methods):
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; expected one of {', '.join(METHODS)}")
        if self.carrier not in ("known", "detect"):
            raise ConfigError("carrier must be 'known' or 'detect'")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if not self.bin_width > 0:
            raise ConfigError("bin_width must be positive")

    def digest(self) -> str:
        """Hash of every setting that influences results (not ``out`` or ``workers``)."""
        parts = [repr(getattr(self, f.name)) for f in fields(self)
                 if f.name not in ("out", "workers", "source_text", "stages")]
        return hashlib.sha256("\n".join(parts).encode()).hexdigest()[:16]


def _split(value: str):
    return tuple(v.strip() for v in value.replace(";", ",").split(",") if v.strip())


def _convert(kind, value: str, key: str):
    try:
        if kind is bool:
            return value.strip().lower() in ("1", "true", "yes", "on")
        if kind is int:
            return int(value)
        if kind is float:
            return float(value)
        return value.strip()
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc


def _section(cp, name, allowed: dict) -> dict:
    if not cp.has_section(name):
        return {}
    out = {}
    for key, raw in cp.items(name):
        if key not in allowed:
            raise ConfigError(f"unknown key [{name}] {key}")
        kind = allowed[key]
        label = f"[{name}] {key}"
        out[key] = _convert(kind, raw, label) if kind in (int, float, str, bool) else kind(raw, label)
    return out


def _roi(value: str, key: str):
    if value.strip().lower() in ("", "none", "full"):
        return None
    parts = _split(value)
    if len(parts) != 4:
        raise ConfigError(f"{key} must be 'x0, y0, width, height'")
    return tuple(_convert(int, p, key) for p in parts)


def parse_config(text: str, overrides: dict | None = None) -> PipelineConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    known = {"pipeline", "grid", "population", "reference", "sensor", "reconstruct", "analyze", "bench"}
    extra = set(cp.sections()) - known
    if extra:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(extra))}")

    d = PipelineConfig()
    pipe = _section(cp, "pipeline", {"stages": str, "seed": int, "out": str, "workers": int})
    grid = _section(cp, "grid", {"width": int, "height": int, "pixel_pitch": float, "wavelength": float})
    pop = _section(cp, "population", {f.name: (int if f.type in ("int", int) else float)
                                      for f in fields(PopulationSpec)})
    ref = _section(cp, "reference", {"fx": float, "fy": float, "amplitude": float, "phase_offset": float})
    sensor = _section(cp, "sensor", {"noise_sigma": float, "bit_depth": int, "quantum_floor": float})
    rec_keys = {f.name: (int if f.type in ("int", int) else float) for f in fields(ReconConfig)}
    rec_keys.update({"roi": _roi, "method": str, "carrier": str, "filter_shape": str,
                     "filter_fraction": float, "unwrap_frame": int})
    rec = _section(cp, "reconstruct", rec_keys)
    ana = _section(cp, "analyze", {"threshold": float, "bin_width": float, "level": str})
    bench = _section(cp, "bench", {"methods": str})

    try:
        solver_names = {f.name for f in fields(ReconConfig)}
        recon_fields = {k: rec.pop(k) for k in list(rec) if k in solver_names}
        cfg = PipelineConfig(
            stages=_split(pipe["stages"]) if "stages" in pipe else d.stages,
            seed=pipe.get("seed", d.seed),
            out=Path(pipe.get("out", d.out)),
            workers=pipe.get("workers", d.workers),
            grid=replace(d.grid, **grid),
            population=replace(d.population, **pop),
            reference=ReferenceWave((ref.get("fx", d.reference.carrier[0]), ref.get("fy", d.reference.carrier[1])),
                                    ref.get("amplitude", d.reference.amplitude),
                                    ref.get("phase_offset", d.reference.phase_offset)),
            sensor=replace(d.sensor, **sensor),
            method=rec.get("method", d.method),
            carrier=rec.get("carrier", d.carrier),
            filter_shape=rec.get("filter_shape", d.filter_shape),
            filter_fraction=rec.get("filter_fraction", d.filter_fraction),
            recon=replace(d.recon, **recon_fields),
            unwrap_frame=rec.get("unwrap_frame", d.unwrap_frame),
            threshold=ana.get("threshold", d.threshold),
            bin_width=ana.get("bin_width", d.bin_width),
            level=ana.get("level", d.level),
            bench_methods=_split(bench["methods"]) if "methods" in bench else d.bench_methods,
            source_text=text,
        )
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    if overrides:
        try:
            cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    text = ""
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, overrides)
