"""Checkpoints and PPM renders of sandpile states.

Checkpoint layout: an ASCII preamble of ``key=value`` lines that starts
with ``BSP1`` and ends with ``END``, followed by the raw payload: each
field in the ``fields`` list, row-major, little-endian, back to back.
The initial field is stored sparsely in the preamble (``sources``), so a
boundary sandpile state costs 17 bytes per box cell plus the preamble.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .dynamics import ChipState, SandpileState
from .lattice import Grid, VisitedSet

MAGIC = "BSP1"
VERSION = 1


class CheckpointError(ValueError):
    pass


class MalformedHeader(CheckpointError):
    pass


class TruncatedPayload(CheckpointError):
    pass


class VersionMismatch(CheckpointError):
    pass


_DTYPES = {"f8": "<f8", "i8": "<i8", "u1": "u1"}


def _state_fields(state):
    if isinstance(state, ChipState):
        vis = state.visited.grid
        return "asm" if state.capacity is None else "asm-capped", state.chips, [
            ("chips", "i8", state.chips.data), ("odometer", "i8", state.odometer.data),
            ("visited", "u1", vis.data)], state.chips0, state.capacity
    return "bs", state.mass, [
        ("mass", "f8", state.mass.data), ("odometer", "f8", state.odometer.data),
        ("visited", "u1", state.visited.mask)], state.mu0, state.capacity


def _fmt_sources(mu0: Grid) -> str:
    items = []
    for p in mu0.points():
        v = mu0[p].item()
        items.append(",".join(str(c) for c in p) + ":" + repr(v))
    return ";".join(items)


def _parse_sources(text: str, d: int, dtype) -> dict:
    out = {}
    if not text:
        return out
    for item in text.split(";"):
        pt, val = item.split(":")
        p = tuple(int(c) for c in pt.split(","))
        if len(p) != d:
            raise MalformedHeader("source point has the wrong dimension")
        out[p] = dtype(val)
    return out


def save(state, path) -> int:
    """Write a checkpoint; returns the file size in bytes."""
    model, ref, fields, mu0, cap = _state_fields(state)
    shapes = {a.shape for _, _, a in fields}
    if len(shapes) != 1:
        raise ValueError("all fields must share one box")
    header = [
        MAGIC,
        f"version={VERSION}",
        f"model={model}",
        f"d={ref.d}",
        f"capacity={cap!r}",
        f"n={float(mu0.data.sum())!r}",
        "origin=" + ",".join(map(str, ref.origin)),
        "shape=" + ",".join(map(str, ref.shape)),
        "fields=" + ",".join(f"{name}:{code}" for name, code, _ in fields),
        f"topplings={getattr(state, 'topplings', getattr(state, 'firings', 0))}",
        "sources=" + _fmt_sources(mu0),
        "END",
    ]
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        for _, code, arr in fields:
            f.write(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())
    return os.path.getsize(path)


def _read_header(f) -> dict:
    first = f.readline()
    if first.rstrip(b"\n") != MAGIC.encode():
        raise MalformedHeader("missing BSP1 magic")
    meta = {}
    while True:
        line = f.readline()
        if not line:
            raise MalformedHeader("preamble ended without END")
        line = line.rstrip(b"\n").decode("ascii", errors="replace")
        if line == "END":
            return meta
        if "=" not in line:
            raise MalformedHeader(f"bad preamble line {line!r}")
        k, v = line.split("=", 1)
        meta[k] = v


def load(path):
    """Read a checkpoint written by :func:`save` (SandpileState or ChipState)."""
    with open(path, "rb") as f:
        meta = _read_header(f)
        try:
            version = int(meta["version"])
        except (KeyError, ValueError) as exc:
            raise MalformedHeader("missing version") from exc
        if version != VERSION:
            raise VersionMismatch(f"checkpoint version {version}, reader supports {VERSION}")
        try:
            model = meta["model"]
            d = int(meta["d"])
            origin = tuple(int(c) for c in meta["origin"].split(","))
            shape = tuple(int(c) for c in meta["shape"].split(","))
            fields = [tuple(x.split(":")) for x in meta["fields"].split(",")]
            cap = None if meta["capacity"] == "None" else float(meta["capacity"])
            topplings = int(meta.get("topplings", 0))
        except (KeyError, ValueError) as exc:
            raise MalformedHeader(str(exc)) from exc
        if len(origin) != d or len(shape) != d or any(code not in _DTYPES for _, code in fields):
            raise MalformedHeader("inconsistent box or field list")
        count = int(np.prod(shape))
        arrays = {}
        for name, code in fields:
            dt = np.dtype(_DTYPES[code])
            raw = f.read(count * dt.itemsize)
            if len(raw) != count * dt.itemsize:
                raise TruncatedPayload(f"field {name}: expected {count * dt.itemsize} bytes, got {len(raw)}")
            arrays[name] = np.frombuffer(raw, dtype=dt).reshape(shape).copy()
        if f.read(1):
            raise MalformedHeader("trailing bytes after payload")
    if model == "bs":
        mu0 = Grid(np.zeros(shape), origin)
        for p, v in _parse_sources(meta.get("sources", ""), d, float).items():
            mu0[p] = v
        vis = VisitedSet(Grid(arrays["visited"].astype(bool), origin))
        return SandpileState(Grid(arrays["mass"].astype(np.float64), origin),
                             Grid(arrays["odometer"].astype(np.float64), origin), vis, cap, mu0, topplings)
    chips0 = Grid(np.zeros(shape, np.int64), origin)
    for p, v in _parse_sources(meta.get("sources", ""), d, int).items():
        chips0[p] = v
    capped = model == "asm-capped"
    vis = Grid(arrays["visited"].astype(bool), origin)
    return ChipState(Grid(arrays["chips"].astype(np.int64), origin),
                     Grid(arrays["odometer"].astype(np.int64), origin), chips0,
                     int(cap) if capped else None, vis if capped else None, topplings)


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Palette:
    """Fixed colours; bump ``version`` whenever any colour changes."""

    background: tuple = (255, 255, 255)
    interior: tuple = (190, 190, 190)
    ramp_light: tuple = (140, 140, 140)
    ramp_dark: tuple = (40, 40, 40)
    origin: tuple = (0, 0, 0)
    version: int = 1


DEFAULT_PALETTE = Palette()


def render_array(state, palette: Palette = DEFAULT_PALETTE, capacity: float | None = None) -> np.ndarray:
    """RGB array, one pixel per lattice cell; rows run from high x2 to low x2."""
    if isinstance(state, ChipState):
        V = state.visited
        mass = state.chips
        cap = capacity or state.capacity or (2 * state.d - 1)
    else:
        V = state.visited
        mass = state.mass
        cap = capacity or state.capacity
    d = V.d
    pts = np.argwhere(V.mask) - np.array(V.grid.origin)
    r = int(np.abs(pts).max()) + 1 if len(pts) else 1
    vm = VisitedSet(Grid(V.grid.window(r), (r,) * d))
    inner = vm.interior_mask
    bnd = vm.boundary_mask
    mm = mass.window(r).astype(np.float64)
    if d > 2:
        mid = (r,) * (d - 2)
        inner, bnd, mm = inner[(Ellipsis,) + mid], bnd[(Ellipsis,) + mid], mm[(Ellipsis,) + mid]
    img = np.empty(inner.shape + (3,), np.uint8)
    img[...] = palette.background
    img[inner] = palette.interior
    t = np.clip(mm / cap, 0.0, 1.0)
    light = np.array(palette.ramp_light, float)
    dark = np.array(palette.ramp_dark, float)
    ramp = np.rint(light + t[..., None] * (dark - light)).astype(np.uint8)
    img[bnd] = ramp[bnd]
    img[r, r] = palette.origin
    # axis 0 is x1 (columns), axis 1 is x2 (rows, upward)
    return np.ascontiguousarray(np.flip(np.swapaxes(img, 0, 1), 0))


def encode_ppm(img: np.ndarray) -> bytes:
    h, w, _ = img.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + img.tobytes()


def render(state, path, palette: Palette = DEFAULT_PALETTE, capacity: float | None = None) -> int:
    """Write a binary PPM (P6) of the visited set; returns the byte count."""
    data = encode_ppm(render_array(state, palette, capacity))
    with open(path, "wb") as f:
        f.write(data)
    return len(data)


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError("not a binary PPM")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], np.uint8).reshape(h, w, 3)
