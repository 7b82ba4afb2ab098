"""On-disk formats: raw field dumps, PGM mask snapshots, graph CSVs, run manifests."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path

import numpy as np

from .geometry import GridSpec
from .semiflow import GraphFunction

MAGIC = "HSFIELD"
VERSION = "v1"


def field_header(grid: GridSpec) -> bytes:
    parts = [MAGIC, VERSION, str(grid.d)] + [repr(float(x)) for x in (grid.R, grid.L, grid.H_top, grid.dx)]
    return (" ".join(parts) + "\n").encode("ascii")


def dump_field(path: str | Path, grid: GridSpec, values: np.ndarray) -> None:
    """Header line, then row-major little-endian float64 values."""
    values = np.asarray(values, dtype="<f8")
    if values.shape != grid.shape:
        raise ValueError(f"values shape {values.shape} != grid shape {grid.shape}")
    with open(path, "wb") as fh:
        fh.write(field_header(grid))
        fh.write(np.ascontiguousarray(values).tobytes())


def load_field(path: str | Path) -> tuple[GridSpec, np.ndarray]:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) != 7 or header[0] != MAGIC or header[1] != VERSION:
            raise ValueError(f"{path}: not an {MAGIC} {VERSION} dump")
        grid = GridSpec(int(header[2]), *(float(x) for x in header[3:]))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != int(np.prod(grid.shape)):
        raise ValueError(f"{path}: expected {np.prod(grid.shape)} values, found {data.size}")
    return grid, data.reshape(grid.shape).astype(float)


def mask_image(cells: np.ndarray) -> np.ndarray:
    """2-D 0/255 image, highest row on top; 3-D masks stack lateral slices top to bottom."""
    c = np.asarray(cells, dtype=bool)
    if c.ndim == 2:
        img = c[::-1]
    else:
        img = np.concatenate([c[::-1, :, k] for k in range(c.shape[2])], axis=0)
    return np.where(img, 255, 0).astype(np.uint8)


def write_pgm(path: str | Path, image: np.ndarray) -> None:
    image = np.asarray(image, dtype=np.uint8)
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end:end + 1].isspace():
            end += 1
        tokens.append(raw[pos:end].decode("ascii"))
        pos = end
    if tokens[0] != "P5" or int(tokens[3]) != 255:
        raise ValueError(f"{path}: only 8-bit binary PGM is supported")
    w, h = int(tokens[1]), int(tokens[2])
    pos += 1  # single whitespace byte after maxval
    return np.frombuffer(raw[pos:pos + w * h], dtype=np.uint8).reshape(h, w).copy()


def image_to_mask(image: np.ndarray, grid: GridSpec) -> np.ndarray:
    img = np.asarray(image) > 127
    if grid.d == 1:
        return img[::-1].copy()
    rows = grid.n_rows
    slices = [img[k * rows:(k + 1) * rows][::-1] for k in range(grid.n_lat)]
    return np.stack(slices, axis=2)


def graph_csv(g: GraphFunction) -> str:
    grid = g.grid
    lat = grid.lateral_mesh()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = ["x1"] if grid.d == 1 else ["x1", "x2"]
    w.writerow(names + ["f", "h"])
    for idx in np.ndindex(*g.f.shape):
        w.writerow([repr(float(x[idx])) for x in lat] + [repr(float(g.f[idx])), repr(float(g.h[idx]))])
    return buf.getvalue()


def write_graph_csv(path: str | Path, g: GraphFunction) -> None:
    Path(path).write_text(graph_csv(g))


def read_graph_csv(path: str | Path) -> dict[str, np.ndarray]:
    with open(path) as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], np.array(rows[1:], dtype=float)
    return {name: body[:, k] for k, name in enumerate(head)}


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def write_manifest(path: str | Path, manifest: dict) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
