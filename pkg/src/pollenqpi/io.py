"""On-disk formats.

Every data file ``foo.ext`` has a plain-text sidecar ``foo.ext.hdr`` of
``key: value`` lines carrying the grid (width, height, pixel_pitch, wavelength)
and any provenance metadata.

* ComplexField: ``.cfield``, little-endian float64 (real, imag) pairs, row-major.
* PhaseMap: ``.phase``, little-endian float64, row-major; sidecar adds ``wrapped``.
* Hologram: 16-bit (or 8-bit) binary PGM when quantized, otherwise ``.raw``
  little-endian float64; sidecar adds the reference wave and ``intensity_scale``.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .field import ComplexField, GridSpec, PhaseMap
from .holosim import Hologram, ReferenceWave

GRID_KEYS = ("width", "height", "pixel_pitch", "wavelength")


class FormatError(ValueError):
    pass


def sidecar_path(path) -> Path:
    return Path(f"{os.fspath(path)}.hdr")


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (np.floating,)):
        return repr(float(value))
    return str(value)


def write_header(path, grid: GridSpec, extra: dict | None = None):
    lines = [f"{k}: {_fmt(getattr(grid, k))}" for k in GRID_KEYS]
    for k, v in (extra or {}).items():
        if k in GRID_KEYS:
            continue
        lines.append(f"{k}: {_fmt(v)}")
    sidecar_path(path).write_text("\n".join(lines) + "\n")


def read_header(path) -> dict:
    hdr = sidecar_path(path)
    if not hdr.exists():
        raise FormatError(f"missing sidecar header {hdr}")
    out = {}
    for line in hdr.read_text().splitlines():
        if not line.strip():
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise FormatError(f"malformed header line in {hdr}: {line!r}")
        out[key.strip()] = value.strip()
    missing = [k for k in GRID_KEYS if k not in out]
    if missing:
        raise FormatError(f"{hdr} lacks {', '.join(missing)}")
    return out


def grid_from_header(hdr: dict) -> GridSpec:
    try:
        return GridSpec(int(hdr["width"]), int(hdr["height"]),
                        float(hdr["pixel_pitch"]), float(hdr["wavelength"]))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad grid in header: {exc}") from exc


def _read_raw(path, dtype, grid: GridSpec):
    data = np.fromfile(path, dtype=dtype)
    if data.size != grid.width * grid.height:
        raise FormatError(f"{path}: expected {grid.width * grid.height} samples, found {data.size}")
    return data.reshape(grid.shape)


def write_complex_field(path, f: ComplexField, extra: dict | None = None):
    np.ascontiguousarray(f.values, dtype="<c16").tofile(path)
    write_header(path, f.grid, extra)


def read_complex_field(path) -> ComplexField:
    hdr = read_header(path)
    grid = grid_from_header(hdr)
    return ComplexField(grid, _read_raw(path, "<c16", grid))


def write_phase_map(path, p: PhaseMap, extra: dict | None = None):
    np.ascontiguousarray(p.values, dtype="<f8").tofile(path)
    write_header(path, p.grid, {"wrapped": p.wrapped, **(extra or {})})


def read_phase_map(path):
    """Return ``(PhaseMap, header dict)``."""
    hdr = read_header(path)
    grid = grid_from_header(hdr)
    wrapped = hdr.get("wrapped", "").lower()
    if wrapped not in ("true", "false"):
        raise FormatError(f"{path}: header needs 'wrapped: true|false'")
    return PhaseMap(grid, _read_raw(path, "<f8", grid), wrapped == "true"), hdr


def write_pgm(path, codes, maxval: int):
    codes = np.asarray(codes)
    h, w = codes.shape
    dtype = ">u2" if maxval > 255 else "u1"
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(codes, dtype=dtype).tobytes())


def read_pgm(path):
    raw = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PGM header")
        tokens.append(raw[start:pos])
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    w, h, maxval = (int(t) for t in tokens[1:])
    pos += 1
    dtype = ">u2" if maxval > 255 else "u1"
    data = np.frombuffer(raw, dtype=dtype, offset=pos)
    if data.size != w * h:
        raise FormatError(f"{path}: expected {w * h} samples, found {data.size}")
    return data.reshape(h, w), maxval


def hologram_suffix(holo: Hologram) -> str:
    return ".pgm" if holo.metadata.get("bit_depth", 0) else ".raw"


def write_hologram(path, holo: Hologram, extra: dict | None = None):
    ref = holo.reference
    meta = dict(holo.metadata)
    meta.update({
        "carrier_fx": ref.carrier[0],
        "carrier_fy": ref.carrier[1],
        "reference_amplitude": ref.amplitude,
        "reference_phase_offset": ref.phase_offset,
    })
    meta.update(extra or {})
    bits = int(meta.get("bit_depth", 0))
    if bits:
        scale = float(meta["intensity_scale"])
        codes = np.round(holo.intensity / scale).astype(np.int64)
        write_pgm(path, codes, 2 ** bits - 1)
        meta["format"] = "pgm"
    else:
        np.ascontiguousarray(holo.intensity, dtype="<f8").tofile(path)
        meta["format"] = "raw"
    write_header(path, holo.grid, meta)


def _coerce(value: str):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    if value in ("true", "false"):
        return value == "true"
    return value


def read_hologram(path) -> Hologram:
    hdr = read_header(path)
    grid = grid_from_header(hdr)
    try:
        ref = ReferenceWave((float(hdr["carrier_fx"]), float(hdr["carrier_fy"])),
                            float(hdr.get("reference_amplitude", 1.0)),
                            float(hdr.get("reference_phase_offset", 0.0)))
    except KeyError as exc:
        raise FormatError(f"{path}: header lacks reference carrier {exc}") from exc
    fmt = hdr.get("format", "raw")
    if fmt == "pgm":
        codes, maxval = read_pgm(path)
        if codes.shape != grid.shape:
            raise FormatError(f"{path}: PGM size does not match header grid")
        intensity = codes.astype(float) * float(hdr["intensity_scale"])
    elif fmt == "raw":
        intensity = _read_raw(path, "<f8", grid)
    else:
        raise FormatError(f"{path}: unknown hologram format {fmt!r}")
    meta = {k: _coerce(v) for k, v in hdr.items() if k not in GRID_KEYS}
    return Hologram(grid, intensity, ref, meta)
