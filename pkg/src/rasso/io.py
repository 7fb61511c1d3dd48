"""File formats: binary cube files, the flat run configuration, PGM map
snapshots, CSV tables and session manifests.

Every writer goes through :func:`atomic_write`, so a crashed run never
leaves a half-written output behind.
"""

from __future__ import annotations

import csv
import io
import math
import os
import re
import struct
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .cfar import CfarConfig
from .evaluation import LABELS, default_k_grid
from .pipeline import PipelineConfig
from .sim import AdcCube, RadarConfig, Scene, Target
from .warp import WarpConfig

MAGIC = b"RSSO"
VERSION = 1
DTYPE_REAL32 = 0
DTYPE_COMPLEX64 = 1
_HEADER = struct.Struct("<4sHH4I")
_DTYPES = {DTYPE_REAL32: np.dtype("<f4"), DTYPE_COMPLEX64: np.dtype("<c8")}


class ConfigError(ValueError):
    """Malformed or unknown configuration."""


class DataError(ValueError):
    """Missing, truncated or inconsistent input data."""


# ------------------------------------------------------------ atomic output

def atomic_write(path: str | os.PathLike, data: bytes | str) -> Path:
    """Write ``data`` to a temp file in the target directory, then rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = data.encode("utf-8") if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


# --------------------------------------------------------------- cube files

@dataclass
class CubeFile:
    """In-memory image of a cube file.

    ``data`` has four axes: ``(frames, rx, chirps, samples)`` for ADC cubes or
    ``(frames, rx, range, doppler)`` for RD cubes; ``metadata['kind']`` says which.
    """

    data: np.ndarray
    metadata: dict = field(default_factory=dict)
    version: int = VERSION

    @property
    def dtype_code(self) -> int:
        return DTYPE_COMPLEX64 if np.iscomplexobj(self.data) else DTYPE_REAL32

    @property
    def kind(self) -> str:
        return self.metadata.get("kind", "adc")


def encode_cube(cube: CubeFile) -> bytes:
    data = np.asarray(cube.data)
    if data.ndim != 4:
        raise ValueError(f"cube files hold 4-D arrays, got shape {data.shape}")
    if any(d >= 2**32 for d in data.shape):
        raise ValueError("cube dimension does not fit in u32")
    code = cube.dtype_code
    payload = np.ascontiguousarray(data, dtype=_DTYPES[code]).tobytes()
    meta = "".join(f"{key}={_meta_value(value)}\n" for key, value in cube.metadata.items())
    return _HEADER.pack(MAGIC, VERSION, code, *data.shape) + payload + meta.encode("utf-8")


def _meta_value(value) -> str:
    text = str(value)
    if "\n" in text:
        raise ValueError("metadata values must be single-line")
    return text


def decode_cube(blob: bytes, source: str = "<bytes>") -> CubeFile:
    if len(blob) < _HEADER.size:
        raise DataError(f"{source}: file too short for a cube header")
    magic, version, code, *dims = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise DataError(f"{source}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise DataError(f"{source}: unsupported cube version {version}")
    if code not in _DTYPES:
        raise DataError(f"{source}: unknown dtype code {code}")
    dtype = _DTYPES[code]
    n_bytes = math.prod(dims) * dtype.itemsize
    end = _HEADER.size + n_bytes
    if len(blob) < end:
        raise DataError(f"{source}: payload truncated ({len(blob) - _HEADER.size} of {n_bytes} bytes)")
    data = np.frombuffer(blob, dtype=dtype, count=math.prod(dims), offset=_HEADER.size).reshape(dims)
    try:
        text = blob[end:].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DataError(f"{source}: metadata block is not UTF-8") from exc
    meta = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        if "=" not in line:
            raise DataError(f"{source}: malformed metadata line {line!r}")
        key, value = line.split("=", 1)
        meta[key] = value
    return CubeFile(data.copy(), meta, version)


def write_cube(path: str | os.PathLike, cube: CubeFile) -> Path:
    return atomic_write(path, encode_cube(cube))


def read_cube(path: str | os.PathLike) -> CubeFile:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except FileNotFoundError as exc:
        raise DataError(f"cube file not found: {path}") from exc
    except OSError as exc:
        raise DataError(f"cannot read cube file {path}: {exc}") from exc
    return decode_cube(blob, str(path))


def adc_to_cube_file(cube: AdcCube, run: Optional["RunConfig"] = None) -> CubeFile:
    meta = {"kind": "adc", **{k: v for k, v in cube.metadata.items()}}
    if run is not None:
        for key, value in run.items():
            meta[f"config.{key}"] = value
    return CubeFile(cube.data, meta)


def cube_file_to_adc(cf: CubeFile, config: Optional[RadarConfig] = None, source: str = "cube") -> AdcCube:
    if cf.kind != "adc":
        raise DataError(f"{source}: expected an ADC cube, file holds kind={cf.kind!r}")
    if config is None:
        config = embedded_config(cf, source).radar
    try:
        return AdcCube(np.asarray(cf.data, dtype=np.complex128), config, dict(cf.metadata))
    except ValueError as exc:
        raise DataError(f"{source}: {exc}") from exc


def embedded_config(cf: CubeFile, source: str = "cube") -> "RunConfig":
    """The run configuration echoed into a cube's metadata."""
    lines = [f"{k[len('config.'):]} = {v}" for k, v in cf.metadata.items() if k.startswith("config.")]
    try:
        return parse_config("\n".join(lines))
    except ConfigError as exc:
        raise DataError(f"{source}: bad embedded config: {exc}") from exc


# ------------------------------------------------------------ run config

@dataclass(frozen=True)
class EvalConfig:
    k_points: int = 64
    k_min: float = 0.5
    k_max: float = 8.0
    far_targets: tuple[float, ...] = (0.01, 0.05)
    bootstrap_b: int = 1000
    seed: int = 0

    def k_grid(self) -> np.ndarray:
        return default_k_grid(self.k_points, self.k_min, self.k_max)


_SCENE_DEFAULTS = {"noise_std": 1.0, "frame_count": 200, "rng_seed": 0}


@dataclass(frozen=True)
class RunConfig:
    radar: RadarConfig = field(default_factory=RadarConfig)
    scene: Scene = field(default_factory=lambda: Scene(**_SCENE_DEFAULTS))
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    cfar: CfarConfig = field(default_factory=CfarConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def items(self) -> list[tuple[str, str]]:
        return config_items(self)

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.items())


# key -> (section, attribute, parser, help)
def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_int(text: str) -> Optional[int]:
    return None if text.strip().lower() in ("", "none", "all") else int(text)


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


_SCALAR_KEYS = {
    "radar.center_frequency": ("radar", "center_frequency", float, "carrier frequency [Hz]"),
    "radar.bandwidth": ("radar", "bandwidth", float, "sweep bandwidth [Hz]"),
    "radar.chirp_duration": ("radar", "chirp_duration", float, "sampled ramp duration [s]"),
    "radar.chirp_repetition": ("radar", "chirp_repetition", float, "chirp repetition interval [s]"),
    "radar.samples_per_chirp": ("radar", "samples_per_chirp", int, "fast-time samples per chirp"),
    "radar.chirps_per_frame": ("radar", "chirps_per_frame", int, "chirps per frame"),
    "radar.frame_rate": ("radar", "frame_rate", float, "frame rate [Hz]"),
    "scene.frame_count": ("scene", "frame_count", int, "frames to simulate"),
    "scene.noise_std": ("scene", "noise_std", float, "complex noise std per sample"),
    "scene.seed": ("scene", "rng_seed", int, "noise seed"),
    "scene.range_falloff": ("scene", "range_falloff", _bool, "scale amplitude by 1/r^2"),
    "mti.alpha": ("pipeline", "mti_alpha", float, "clutter forgetting factor"),
    "warp.enabled": ("warp", "enabled", _bool, "apply the Doppler warp before beamforming"),
    "warp.edge_frequency": ("warp", "edge_frequency", float, "warp knee [cycles/chirp]"),
    "beamform.processor": ("pipeline", "processor", str, "dbf or capon"),
    "beamform.azimuth_points": ("pipeline", "azimuth_points", int, "azimuth grid size"),
    "beamform.azimuth_span_deg": ("pipeline", "azimuth_span_deg", float, "azimuth grid half-span [deg]"),
    "beamform.elevation_points": ("pipeline", "elevation_points", int, "DBF elevation grid size"),
    "beamform.elevation_span_deg": ("pipeline", "elevation_span_deg", float, "DBF elevation half-span [deg]"),
    "beamform.smooth_frames": ("pipeline", "smooth_frames", int, "RA maps averaged per output"),
    "beamform.snapshot_bins": ("pipeline", "snapshot_bins", _optional_int, "Capon Doppler cells (none = all)"),
    "cfar.guard": ("cfar", "guard", int, "guard cells per side"),
    "cfar.train": ("cfar", "train", int, "training cells per side"),
    "cfar.k": ("cfar", "k", float, "threshold multiplier"),
    "cfar.area_min": ("cfar", "area_min", int, "minimum component area for presence"),
    "eval.k_points": ("eval", "k_points", int, "k sweep points (log-spaced)"),
    "eval.k_min": ("eval", "k_min", float, "smallest k in the sweep"),
    "eval.k_max": ("eval", "k_max", float, "largest k in the sweep"),
    "eval.far_targets": ("eval", "far_targets", _float_list, "comma-separated FAR targets"),
    "eval.bootstrap_b": ("eval", "bootstrap_b", int, "bootstrap replicates"),
    "eval.seed": ("eval", "seed", int, "bootstrap seed"),
    "eval.warmup_frames": ("pipeline", "warmup_frames", int, "leading frames excluded from scoring"),
}

_TARGET_FIELDS = {
    "x": float, "y": float, "reflectivity": float,
    "breathing_amplitude": float, "breathing_rate": float, "breathing_phase": float,
}
_CLUTTER_FIELDS = {"x": float, "y": float, "reflectivity": float}
_GROUP_RE = re.compile(r"^scene\.(target|clutter)\.(\d+)\.([a-z_]+)$")


def _target_from(group: dict, kind: str, index: int) -> Target:
    if "x" not in group or "y" not in group:
        raise ConfigError(f"scene.{kind}.{index} needs both x and y")
    kwargs = {k: v for k, v in group.items() if k not in ("x", "y")}
    try:
        return Target((group["x"], group["y"]), **kwargs)
    except ValueError as exc:
        raise ConfigError(f"scene.{kind}.{index}: {exc}") from exc


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are errors."""
    sections: dict[str, dict] = {"radar": {}, "scene": {}, "pipeline": {}, "warp": {}, "cfar": {}, "eval": {}}
    groups: dict[str, dict[int, dict]] = {"target": {}, "clutter": {}}
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        seen.add(key)
        try:
            if key in _SCALAR_KEYS:
                section, attr, parse, _ = _SCALAR_KEYS[key]
                sections[section][attr] = parse(value)
                continue
            m = _GROUP_RE.match(key)
            if m:
                kind, index, name = m.group(1), int(m.group(2)), m.group(3)
                allowed = _TARGET_FIELDS if kind == "target" else _CLUTTER_FIELDS
                if name in allowed:
                    groups[kind].setdefault(index, {})[name] = allowed[name](value)
                    continue
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from exc
        raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")

    try:
        radar = RadarConfig(**sections["radar"])
        targets = [_target_from(groups["target"][i], "target", i) for i in sorted(groups["target"])]
        clutter = [_target_from(groups["clutter"][i], "clutter", i) for i in sorted(groups["clutter"])]
        scene = Scene(targets, clutter, **{**_SCENE_DEFAULTS, **sections["scene"]})
        warp = WarpConfig(**{"enabled": False, **sections["warp"]})
        pipeline = PipelineConfig(warp=warp, **sections["pipeline"])
        cfar = CfarConfig(**sections["cfar"])
        ev = EvalConfig(**sections["eval"])
        if ev.k_points < 1 or not 0 < ev.k_min <= ev.k_max:
            raise ValueError("eval k grid needs k_points >= 1 and 0 < k_min <= k_max")
        if ev.bootstrap_b < 1:
            raise ValueError("eval.bootstrap_b must be >= 1")
        if any(not 0 < t < 1 for t in ev.far_targets):
            raise ValueError("eval.far_targets must lie in (0, 1)")
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{source}: {exc}") from exc
    return RunConfig(radar, scene, pipeline, cfar, ev)


def load_config(path: Optional[str | os.PathLike]) -> RunConfig:
    """Read a config file; ``None`` gives the defaults."""
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config(text, str(path))


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    return str(value)


def config_items(run: RunConfig) -> list[tuple[str, str]]:
    """Every key with its value, in a stable order; ``parse_config`` inverts it."""
    objs = {"radar": run.radar, "scene": run.scene, "pipeline": run.pipeline,
            "warp": run.pipeline.warp, "cfar": run.cfar, "eval": run.eval}
    out = [(key, _fmt(getattr(objs[section], attr)))
           for key, (section, attr, _, _) in _SCALAR_KEYS.items()]
    for kind, items, names in (("target", run.scene.targets, _TARGET_FIELDS),
                               ("clutter", run.scene.static_clutter, _CLUTTER_FIELDS)):
        for i, t in enumerate(items):
            for name in names:
                value = t.position[0] if name == "x" else t.position[1] if name == "y" else getattr(t, name)
                out.append((f"scene.{kind}.{i}.{name}", _fmt(float(value))))
    return out


def describe_defaults() -> str:
    """Commented default configuration, one documented key per line."""
    defaults = dict(config_items(RunConfig()))
    lines = ["# rasso run configuration (defaults)"]
    for key, (_, _, _, help_text) in _SCALAR_KEYS.items():
        lines.append(f"{key} = {defaults[key]}  # {help_text}")
    lines.append("# scatterers: scene.target.<i>.{x,y,reflectivity,breathing_amplitude,"
                 "breathing_rate,breathing_phase}")
    lines.append("#             scene.clutter.<i>.{x,y,reflectivity}   (x lateral, y boresight, metres)")
    return "\n".join(lines) + "\n"


def with_overrides(run: RunConfig, processor: Optional[str] = None, rasso: Optional[bool] = None,
                   k: Optional[float] = None) -> RunConfig:
    pipe = run.pipeline
    if processor is not None:
        pipe = replace(pipe, processor=processor)
    if rasso is not None:
        pipe = replace(pipe, warp=replace(pipe.warp, enabled=rasso))
    cfar = run.cfar if k is None else replace(run.cfar, k=k)
    return replace(run, pipeline=pipe, cfar=cfar)


# --------------------------------------------------------------- PGM / CSV

def encode_pgm(values: np.ndarray, max_value: float | None = None) -> bytes:
    """16-bit binary PGM (P5, big-endian samples) of a 2-D map scaled to [0, 65535].

    Boolean masks map to {0, 65535}. ``max_value`` fixes the scale; by default
    the map maximum is used (a zero map stays zero).
    """
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError("PGM holds 2-D maps")
    v = values.astype(float)
    top = float(v.max()) if max_value is None else float(max_value)
    scaled = np.zeros_like(v) if top <= 0 else np.clip(v / top, 0.0, 1.0) * 65535
    pixels = np.rint(scaled).astype(">u2")
    rows, cols = v.shape
    return f"P5\n{cols} {rows}\n65535\n".encode("ascii") + pixels.tobytes()


def decode_pgm(blob: bytes) -> np.ndarray:
    parts = blob.split(maxsplit=4)
    if len(parts) < 5 or parts[0] != b"P5":
        raise DataError("not a binary PGM")
    cols, rows, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    dtype = ">u2" if maxval > 255 else "u1"
    data = parts[4]
    return np.frombuffer(data, dtype=dtype, count=rows * cols).reshape(rows, cols).astype(np.uint16)


def write_pgm(path: str | os.PathLike, values: np.ndarray, max_value: float | None = None) -> Path:
    return atomic_write(path, encode_pgm(values, max_value))


def _cell(value) -> str:
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    if isinstance(value, (np.floating,)):
        return _cell(float(value))
    if isinstance(value, (np.integer, np.bool_)):
        return str(value.item())
    return "" if value is None else str(value)


def write_csv(path: str | os.PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} cells, header has {len(header)}")
        w.writerow([_cell(v) for v in row])
    return atomic_write(path, buf.getvalue())


def read_csv(path: str | os.PathLike) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# ----------------------------------------------------------------- manifest

@dataclass(frozen=True)
class ManifestEntry:
    session_id: str
    cube_path: Path
    label: str


MANIFEST_HEADER = ("session_id", "cube_path", "label")


def read_manifest(path: str | os.PathLike, check_files: bool = True) -> list[ManifestEntry]:
    """Parse a session manifest; relative cube paths resolve against its directory."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise DataError(f"manifest not found: {path}") from exc
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or tuple(f.strip() for f in reader.fieldnames) != MANIFEST_HEADER:
        raise DataError(f"{path}: manifest header must be {','.join(MANIFEST_HEADER)}")
    out, seen = [], set()
    for lineno, row in enumerate(reader, 2):
        sid, cube, label = (row[k].strip() if row[k] else "" for k in reader.fieldnames)
        if not sid or not cube:
            raise DataError(f"{path}:{lineno}: empty session_id or cube_path")
        if label not in LABELS:
            raise DataError(f"{path}:{lineno}: label must be one of {LABELS}, got {label!r}")
        if sid in seen:
            raise DataError(f"{path}:{lineno}: duplicate session_id {sid!r}")
        seen.add(sid)
        cube_path = Path(cube)
        if not cube_path.is_absolute():
            cube_path = path.parent / cube_path
        if check_files and not cube_path.is_file():
            raise DataError(f"{path}:{lineno}: cube file not found: {cube_path}")
        out.append(ManifestEntry(sid, cube_path, label))
    if not out:
        raise DataError(f"{path}: manifest lists no sessions")
    return out


def write_manifest(path: str | os.PathLike, entries: Sequence[ManifestEntry]) -> Path:
    base = Path(path).parent.resolve()
    rows = []
    for e in entries:
        p = Path(e.cube_path).resolve()
        try:
            p = p.relative_to(base)
        except ValueError:
            pass
        rows.append((e.session_id, p.as_posix(), e.label))
    return write_csv(path, MANIFEST_HEADER, rows)
