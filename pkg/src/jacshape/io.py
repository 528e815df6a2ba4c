"""Serialization: CSV interchange, lossless JSON+base64 round-trips for
fields/maps/domains, and PGM images (mask input, heatmap output)."""

from __future__ import annotations

import base64
import json
import os

import numpy as np

from .domains import Domain
from .errors import InputIOError, ShapeMismatchError
from .fields import ScalarField, VectorField, scalar_field
from .transport import GridMap

FORMAT_TAG = "jacshape-field-v1"


def _b64(arr):
    return base64.b64encode(np.ascontiguousarray(arr).tobytes()).decode("ascii")


def _unb64(text, dtype, shape):
    raw = base64.b64decode(text.encode("ascii"))
    arr = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
    return arr


def domain_to_dict(dom: Domain):
    return {
        "dim": dom.dim,
        "bbox": [list(b) for b in dom.bbox],
        "resolution": list(dom.resolution),
        "h_grid": dom.h_grid,
        "boundary_components": dom.boundary_components,
        "descriptor": dom.descriptor,
        "mask_b64": _b64(dom.mask.astype(np.uint8)),
        "sdist_b64": _b64(dom.sdist.astype("<f8")),
    }


def domain_from_dict(data):
    shape = tuple(data["resolution"])
    mask = _unb64(data["mask_b64"], np.uint8, shape).astype(bool)
    sdist = _unb64(data["sdist_b64"], "<f8", shape)
    return Domain(
        dim=int(data["dim"]),
        bbox=tuple(tuple(b) for b in data["bbox"]),
        resolution=shape,
        h_grid=float(data["h_grid"]),
        mask=mask,
        sdist=sdist,
        boundary_components=int(data["boundary_components"]),
        descriptor=data.get("descriptor"),
    )


def to_json_dict(obj):
    """Lossless JSON form of a ScalarField, VectorField or GridMap."""
    if isinstance(obj, ScalarField):
        return {
            "format": FORMAT_TAG,
            "kind": "scalar",
            "fill_kind": obj.fill_kind,
            "domain": domain_to_dict(obj.domain),
            "data": [_b64(obj.values.astype("<f8"))],
        }
    if isinstance(obj, VectorField):
        return {
            "format": FORMAT_TAG,
            "kind": "vector",
            "domain": domain_to_dict(obj.domain),
            "data": [_b64(obj.components[i].astype("<f8"))
                     for i in range(obj.domain.dim)],
        }
    if isinstance(obj, GridMap):
        out = to_json_dict(obj.displacement)
        out["kind"] = "map"
        out["interp"] = obj.interp
        return out
    raise InputIOError(f"cannot serialize {type(obj).__name__}")


def from_json_dict(data):
    if data.get("format") != FORMAT_TAG:
        raise InputIOError("not a jacshape field file")
    dom = domain_from_dict(data["domain"])
    shape = dom.grid_shape
    kind = data["kind"]
    if kind == "scalar":
        values = _unb64(data["data"][0], "<f8", shape)
        return ScalarField(domain=dom, values=values,
                           fill_kind=data.get("fill_kind", "zero"))
    comps = np.stack([_unb64(d, "<f8", shape) for d in data["data"]])
    vec = VectorField(domain=dom, components=comps)
    if kind == "vector":
        return vec
    if kind == "map":
        return GridMap(displacement=vec, interp=data.get("interp", "bilinear"))
    raise InputIOError(f"unknown field kind {kind!r}")


def save_json(obj, path):
    with open(path, "w") as fh:
        json.dump(to_json_dict(obj), fh, sort_keys=True)
        fh.write("\n")


def load_json(path):
    try:
        with open(path) as fh:
            return from_json_dict(json.load(fh))
    except (OSError, ValueError) as exc:
        raise InputIOError(f"cannot read field file {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# CSV interchange
# ---------------------------------------------------------------------------


def save_csv(obj, path):
    """Header nx, ny, x0, y0, h_grid, then row-major values (one grid row
    per line; vector components and map displacements as consecutive
    blocks).  1D fields use ny = 1."""
    if isinstance(obj, GridMap):
        arrays = [obj.displacement.components[i]
                  for i in range(obj.domain.dim)]
        dom = obj.domain
    elif isinstance(obj, VectorField):
        arrays = [obj.components[i] for i in range(obj.domain.dim)]
        dom = obj.domain
    else:
        arrays = [obj.values]
        dom = obj.domain
    nx = dom.resolution[0]
    ny = dom.resolution[1] if dom.dim == 2 else 1
    x0 = dom.bbox[0][0]
    y0 = dom.bbox[1][0] if dom.dim == 2 else 0.0
    with open(path, "w") as fh:
        fh.write("nx,ny,x0,y0,h_grid\n")
        fh.write(f"{nx},{ny},{x0!r},{y0!r},{dom.h_grid!r}\n")
        for arr in arrays:
            rows = arr.reshape(nx, ny)
            for i in range(nx):
                fh.write(",".join(repr(v) for v in rows[i]) + "\n")


def load_csv(path, domain: Domain, fill_kind="zero"):
    """Read a scalar-field CSV onto an existing domain (grid must match)."""
    try:
        with open(path) as fh:
            header = fh.readline()
            meta = fh.readline().strip().split(",")
            rows = [line.strip() for line in fh if line.strip()]
    except OSError as exc:
        raise InputIOError(f"cannot read {path}: {exc}") from exc
    if not header.startswith("nx"):
        raise InputIOError(f"{path}: missing CSV header")
    nx, ny = int(meta[0]), int(meta[1])
    h = float(meta[4])
    if (nx,) + ((ny,) if domain.dim == 2 else ()) != domain.grid_shape or not np.isclose(
        h, domain.h_grid
    ):
        raise ShapeMismatchError(
            f"{path}: grid {nx}x{ny} (h={h}) does not match the domain"
        )
    vals = np.array([[float(v) for v in r.split(",")] for r in rows[:nx]])
    return scalar_field(domain, vals.reshape(domain.grid_shape), fill_kind)


# ---------------------------------------------------------------------------
# PGM images
# ---------------------------------------------------------------------------


def read_pgm(path):
    """P2/P5 PGM as an array indexed [x, y] with y increasing upward."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise InputIOError(f"cannot read {path}: {exc}") from exc
    tokens = []
    i = 0
    while len(tokens) < 4 and i < len(data):
        if data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
        elif data[i : i + 1].isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j : j + 1].isspace():
                j += 1
            tokens.append(data[i:j])
            i = j
    if len(tokens) < 4 or tokens[0] not in (b"P2", b"P5"):
        raise InputIOError(f"{path}: not a P2/P5 PGM file")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if tokens[0] == b"P5":
        i += 1  # single whitespace after maxval
        dtype = np.uint8 if maxval < 256 else ">u2"
        raster = np.frombuffer(data[i:], dtype=dtype, count=width * height)
    else:
        raster = np.array(data[i:].split()[: width * height], dtype=np.int64)
    img = raster.reshape(height, width)
    return img[::-1, :].T.copy()


def write_pgm(path, array_xy, maxval=255):
    """Write an [x, y] array of levels in [0, maxval] as binary PGM."""
    img = np.asarray(array_xy).T[::-1, :]
    height, width = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n{maxval}\n".encode("ascii"))
        fh.write(np.clip(img, 0, maxval).astype(np.uint8).tobytes())


def save_heatmap(field: ScalarField, path):
    """Min-max scaled PGM heatmap plus a JSON sidecar recording the scale."""
    vals = field.values if field.domain.dim == 2 else field.values[:, None]
    vmin = float(vals.min())
    vmax = float(vals.max())
    if vmax > vmin:
        levels = np.rint((vals - vmin) / (vmax - vmin) * 255.0)
    else:
        levels = np.zeros_like(vals)
    write_pgm(path, levels)
    sidecar = {
        "min": vmin,
        "max": vmax,
        "nx": int(vals.shape[0]),
        "ny": int(vals.shape[1]),
    }
    with open(str(path) + ".json", "w") as fh:
        json.dump(sidecar, fh, sort_keys=True)
        fh.write("\n")


def load_field(path, domain=None, fill_kind="one"):
    """Load a field from .json (self-contained) or .csv (needs a domain)."""
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".json":
        return load_json(path)
    if ext == ".csv":
        if domain is None:
            raise InputIOError(f"{path}: CSV fields need an explicit --domain")
        return load_csv(path, domain, fill_kind)
    raise InputIOError(f"{path}: unknown field format {ext!r}")
