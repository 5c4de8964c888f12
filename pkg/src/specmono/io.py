"""File formats: point clouds, model and cover files, reports and SVG plots.

Point clouds use the ``spectrum v1`` text format: a header line
``spectrum v1 eps <e> h <h>`` followed by one ``re im`` pair per line with 17
significant digits. Model, cover and run files are INI files. Reports are
JSON with sorted keys so that equal inputs give identical bytes.
"""

from __future__ import annotations

import configparser
import json
import math
import re
from pathlib import Path

import numpy as np

from .errors import ConfigError, IOFailure, ParseError
from .latticemono import Ball
from .quantize import ModelSystem, SpectrumCloud, make_model

SPECTRUM_HEADER = re.compile(rb"spectrum v1 eps (\S+) h (\S+)")


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc.strerror or exc}") from None


def write_text(path, text: str):
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc.strerror or exc}") from None


def dumps_spectrum(cloud: SpectrumCloud) -> str:
    lines = [f"spectrum v1 eps {cloud.eps!r} h {cloud.h!r}"]
    lines += [f"{z.real:.17g} {z.imag:.17g}" for z in cloud.points]
    return "\n".join(lines) + "\n"


def loads_spectrum(data: bytes | str, path=None) -> SpectrumCloud:
    """Parse a ``spectrum v1`` file; errors report the byte offset of the bad line."""
    if isinstance(data, str):
        data = data.encode()
    lines = data.split(b"\n")
    m = SPECTRUM_HEADER.fullmatch(lines[0].strip()) if lines else None
    if m is None:
        raise ParseError("expected header 'spectrum v1 eps <e> h <h>'", path=path, offset=0, line=1)
    try:
        eps, h = float(m.group(1)), float(m.group(2))
    except ValueError:
        raise ParseError("non-numeric eps or h in header", path=path, offset=0, line=1) from None
    pts = []
    offset = len(lines[0]) + 1
    for n, raw in enumerate(lines[1:], start=2):
        text = raw.strip()
        if text:
            parts = text.split()
            try:
                if len(parts) != 2:
                    raise ValueError
                re_, im = float(parts[0]), float(parts[1])
            except ValueError:
                raise ParseError(f"expected 're im', got {raw[:40].decode(errors='replace')!r}",
                                 path=path, offset=offset, line=n) from None
            if not (math.isfinite(re_) and math.isfinite(im)):
                raise ParseError("non-finite value", path=path, offset=offset, line=n)
            pts.append(complex(re_, im))
        offset += len(raw) + 1
    return SpectrumCloud(np.array(pts, dtype=complex), eps, h, "file")


def read_spectrum(path) -> SpectrumCloud:
    return loads_spectrum(_read_bytes(path), path)


def write_spectrum(path, cloud: SpectrumCloud):
    write_text(path, dumps_spectrum(cloud))


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def read_json(path) -> dict:
    data = _read_bytes(path)
    try:
        return json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path=path, offset=exc.pos, line=exc.lineno) from None


def read_ini(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    text = _read_bytes(path).decode(errors="replace")
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ParseError(str(exc).splitlines()[0], path=path, line=line) from None
    return cp


def parse_floats(text: str, n: int | None = None, *, where: str = "value") -> list[float]:
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise ConfigError(f"{where}: expected numbers, got {text!r}") from None
    if n is not None and len(vals) != n:
        raise ConfigError(f"{where}: expected {n} numbers, got {len(vals)}")
    if not all(math.isfinite(v) for v in vals):
        raise ConfigError(f"{where}: non-finite number in {text!r}")
    return vals


def parse_matrix(text: str, *, where: str = "matrix") -> np.ndarray:
    """``"a,b;c,d"`` to an integer 2x2 matrix."""
    rows = [r for r in text.split(";") if r.strip()]
    vals = [parse_floats(r, 2, where=where) for r in rows]
    if len(vals) != 2 or any(v != round(v) for row in vals for v in row):
        raise ConfigError(f"{where}: expected an integer 2x2 matrix 'a,b;c,d', got {text!r}")
    return np.array(vals, dtype=np.int64)


def model_from_section(section, where: str = "model") -> ModelSystem:
    """Model from INI keys ``phi``, ``tau_c``, ``maslov_k``, ``delta`` and
    per-model parameters."""
    keys = dict(section)
    if "phi" not in keys:
        raise ConfigError(f"{where}: missing key 'phi'")
    phi = keys.pop("phi").strip()
    kw = {}
    for key, value in keys.items():
        if key == "maslov_k":
            vals = parse_floats(value, 2, where=f"{where}.{key}")
            if any(v != round(v) for v in vals):
                raise ConfigError(f"{where}.maslov_k must be integers")
            kw[key] = tuple(int(v) for v in vals)
        else:
            vals = parse_floats(value, where=f"{where}.{key}")
            kw[key] = tuple(vals) if len(vals) > 1 else vals[0]
    return make_model(phi, **kw)


def read_model(path) -> ModelSystem:
    cp = read_ini(path)
    if not cp.has_section("model"):
        raise ConfigError(f"{path}: missing [model] section")
    return model_from_section(cp["model"], f"{path}[model]")


def cover_from_ini(cp: configparser.ConfigParser, where: str = "cover"):
    """Balls, loops and rectangle centres from a cover file.

    Sections ``[ball <n>]`` hold ``center = x, y`` and ``radius``; ``[loops]``
    maps names to ball index sequences; ``[rectangles]`` holds ``centers =
    x, y; x, y ...`` and/or ``ring = cx, cy, radius, step_deg, offset_deg``.
    """
    balls = {}
    for name in cp.sections():
        m = re.fullmatch(r"ball\s+(\d+)", name.strip())
        if not m:
            continue
        sec = cp[name]
        try:
            center = parse_floats(sec["center"], 2, where=f"{where}[{name}].center")
            radius = parse_floats(sec["radius"], 1, where=f"{where}[{name}].radius")[0]
        except KeyError as exc:
            raise ConfigError(f"{where}[{name}]: missing key {exc.args[0]!r}") from None
        if radius <= 0:
            raise ConfigError(f"{where}[{name}]: radius must be positive")
        balls[int(m.group(1))] = Ball((center[0], center[1]), radius)
    if not balls:
        raise ConfigError(f"{where}: no [ball <n>] sections")
    if sorted(balls) != list(range(len(balls))):
        raise ConfigError(f"{where}: balls must be numbered 0..{len(balls) - 1}")
    loops = {}
    if cp.has_section("loops"):
        for name, value in cp["loops"].items():
            idx = [int(v) for v in parse_floats(value, where=f"{where}[loops].{name}")]
            if any(i not in balls for i in idx):
                raise ConfigError(f"{where}[loops].{name}: unknown ball index")
            loops[name] = idx
    centers = []
    if cp.has_section("rectangles"):
        sec = cp["rectangles"]
        if "centers" in sec:
            for chunk in sec["centers"].split(";"):
                if chunk.strip():
                    centers.append(parse_floats(chunk, 2, where=f"{where}[rectangles].centers"))
        if "ring" in sec:
            cx, cy, r, step, off = parse_floats(sec["ring"], 5, where=f"{where}[rectangles].ring")
            if step <= 0:
                raise ConfigError(f"{where}[rectangles].ring: step must be positive")
            for a in np.deg2rad(np.arange(off, 360.0, step)):
                centers.append([cx + r * math.cos(a), cy + r * math.sin(a)])
    return [balls[i] for i in range(len(balls))], loops, np.array(centers, dtype=float).reshape(-1, 2)


def read_cover(path):
    return cover_from_ini(read_ini(path), str(path))


PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


def scatter_svg(groups, boxes, size: int = 640, margin: int = 20) -> str:
    """Fixed-palette scatter plot.

    ``groups`` is a list of ``(N, 2)`` point arrays, one colour each;
    ``boxes`` is a list of ``(corners (4, 2), colour index)``.
    """
    allpts = [g for g in groups if len(g)] + [c for c, _ in boxes]
    if allpts:
        stack = np.vstack(allpts)
        lo, hi = stack.min(axis=0), stack.max(axis=0)
    else:
        lo, hi = np.zeros(2), np.ones(2)
    span = max(float(np.max(hi - lo)), 1e-300)
    scale = (size - 2 * margin) / span

    def xy(p):
        return margin + (p[0] - lo[0]) * scale, size - margin - (p[1] - lo[1]) * scale

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">',
           f'<rect width="{size}" height="{size}" fill="white"/>']
    for i, pts in enumerate(groups):
        colour = PALETTE[i % len(PALETTE)]
        out.append(f'<g fill="{colour}">')
        for p in pts:
            x, y = xy(p)
            out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="0.8"/>')
        out.append("</g>")
    for corners, ci in boxes:
        d = " ".join(f"{x:.2f},{y:.2f}" for x, y in map(xy, corners))
        out.append(f'<polygon points="{d}" fill="none" stroke="{PALETTE[ci % len(PALETTE)]}" '
                   f'stroke-width="0.6"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
