"""Grid domains: masks, signed distance, collars, inradius, exhaustion.

A domain is a uniform cell-centered lattice over a bounding box together
with a boolean inside-mask and a signed distance to the boundary (negative
inside).  Cell-centered nodes keep every in-mask node strictly inside the
continuum region, so the quadrature of a constant over an axis-aligned box
is exact and `sdist < 0` holds exactly on the mask.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .errors import (
    CollarError,
    DegenerateDomainError,
    ExhaustionFailureError,
    InputIOError,
    UsageError,
)

#: 4-connectivity structuring element used for mask connectivity.
_CONN4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_CONN8 = np.ones((3, 3), dtype=bool)

MIN_RESOLUTION = 16


@dataclass(frozen=True, eq=False)
class Domain:
    """Discrete 1D interval or 2D planar region on a uniform grid.

    Attributes
    ----------
    dim : 1 or 2
    bbox : tuple of (lo, hi) per axis
    resolution : nodes per axis
    h_grid : grid spacing, identical along every axis
    mask : bool array, True strictly inside the region
    sdist : signed distance to the region boundary at each node (< 0 inside)
    boundary_components : number of connected boundary components
    descriptor : JSON-ready construction recipe, None for derived domains
    """

    dim: int
    bbox: tuple
    resolution: tuple
    h_grid: float
    mask: np.ndarray
    sdist: np.ndarray
    boundary_components: int
    descriptor: dict | None = None
    warnings: tuple = field(default_factory=tuple)

    def __post_init__(self):
        self.mask.setflags(write=False)
        self.sdist.setflags(write=False)

    @property
    def grid_shape(self):
        return self.resolution

    def axes(self):
        """Cell-center coordinates along each axis."""
        return tuple(
            lo + (np.arange(n) + 0.5) * self.h_grid
            for (lo, _), n in zip(self.bbox, self.resolution)
        )

    def coords(self):
        """Node coordinates, shape (dim, *grid_shape)."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"))

    def quad_weights(self):
        """Quadrature weight per node: cell volume scaled by the inside
        fraction of the cell, estimated from the signed distance."""
        frac = np.clip(0.5 - self.sdist / self.h_grid, 0.0, 1.0)
        return (self.h_grid**self.dim) * frac

    def measure(self):
        """Quadrature measure of the region."""
        return float(self.quad_weights().sum())

    def interior_mask(self, depth=1):
        """In-mask nodes whose `depth`-neighborhood stays in-mask."""
        return self.mask & ~mask_edge(self.mask, depth)

    def same_grid(self, other):
        return (
            self.dim == other.dim
            and self.resolution == other.resolution
            and np.allclose(np.asarray(self.bbox), np.asarray(other.bbox))
            and np.array_equal(self.mask, other.mask)
        )

    def diameter(self):
        return float(
            np.sqrt(sum((hi - lo) ** 2 for lo, hi in self.bbox))
        )


def mask_edge(mask, depth=1):
    """Nodes of `mask` within `depth` axis-steps of a non-mask node."""
    inner = mask.copy()
    for _ in range(depth):
        eroded = inner.copy()
        for ax in range(mask.ndim):
            eroded &= np.roll(inner, 1, axis=ax) & np.roll(inner, -1, axis=ax)
            # roll wraps around; nodes on the array edge are always edge nodes
            edge = [slice(None)] * mask.ndim
            edge[ax] = 0
            eroded[tuple(edge)] = False
            edge[ax] = -1
            eroded[tuple(edge)] = False
        inner = eroded
    return mask & ~inner


def _check_connected(mask, error_cls, what):
    if not mask.any():
        raise error_cls(f"{what}: empty mask")
    if mask.ndim == 1:
        idx = np.flatnonzero(mask)
        if idx[-1] - idx[0] + 1 != idx.size:
            raise error_cls(f"{what}: mask is not a single interval")
        return
    _, count = ndimage.label(mask, structure=_CONN4)
    if count != 1:
        raise error_cls(f"{what}: mask has {count} connected components")


def _boundary_components(mask):
    if mask.ndim == 1:
        return 2
    outside = np.pad(~mask, 1, constant_values=True)
    _, count = ndimage.label(outside, structure=_CONN8)
    return int(count)


def _finish(dim, bbox, resolution, h, mask, sdist, descriptor, warnings=()):
    mask = np.ascontiguousarray(mask, dtype=bool)
    sdist = np.ascontiguousarray(sdist, dtype=np.float64)
    _check_connected(mask, DegenerateDomainError, "domain")
    if not mask.any():
        raise DegenerateDomainError("domain has no interior node")
    ncomp = _boundary_components(mask)
    warnings = tuple(warnings)
    if ncomp > 1 and dim == 2:
        warnings = warnings + (
            f"boundary has {ncomp} components; collar-based solvers "
            "support a single component only",
        )
    return Domain(
        dim=dim,
        bbox=bbox,
        resolution=resolution,
        h_grid=float(h),
        mask=mask,
        sdist=sdist,
        boundary_components=ncomp,
        descriptor=descriptor,
        warnings=warnings,
    )


def _box_sdist(coords, bbox):
    """Exact signed distance to an axis-aligned box at the given coords."""
    center = np.array([(lo + hi) / 2 for lo, hi in bbox])
    half = np.array([(hi - lo) / 2 for lo, hi in bbox])
    q = np.abs(coords - center.reshape(-1, *([1] * (coords.ndim - 1)))) - half.reshape(
        -1, *([1] * (coords.ndim - 1))
    )
    outside = np.sqrt((np.maximum(q, 0.0) ** 2).sum(axis=0))
    inside = np.minimum(q.max(axis=0), 0.0)
    return outside + inside


def build_domain(spec, resolution=None):
    """Construct a Domain from a shape descriptor.

    `spec` is a dict such as ``{"shape": "disk", "center": [0, 0],
    "radius": 1.0, "resolution": 128}`` with shapes ``interval``, ``disk``,
    ``rectangle`` or ``mask`` (PGM file path under key ``path``).  An
    explicit `resolution` argument overrides the descriptor's.
    """
    if not isinstance(spec, dict) or "shape" not in spec:
        raise UsageError("domain descriptor must be a dict with a 'shape' key")
    spec = dict(spec)
    shape = spec["shape"]
    if resolution is not None:
        spec["resolution"] = int(resolution)
    res = spec.get("resolution")
    if shape != "mask":
        if res is None:
            raise UsageError("resolution required for analytic shapes")
        res = int(res)
        if res < MIN_RESOLUTION:
            raise DegenerateDomainError(
                f"resolution {res} < {MIN_RESOLUTION}: grid underresolved"
            )

    if shape == "interval":
        a, b = float(spec["a"]), float(spec["b"])
        if not b > a:
            raise UsageError("interval needs b > a")
        h = (b - a) / res
        x = a + (np.arange(res) + 0.5) * h
        sdist = -np.minimum(x - a, b - x)
        mask = sdist < 0
        return _finish(1, ((a, b),), (res,), h, mask, sdist, spec)

    if shape == "disk":
        cx, cy = (float(v) for v in spec.get("center", (0.0, 0.0)))
        r = float(spec["radius"])
        if r <= 0:
            raise UsageError("disk needs radius > 0")
        bbox = ((cx - r, cx + r), (cy - r, cy + r))
        h = 2 * r / res
        dom_axes = tuple(lo + (np.arange(res) + 0.5) * h for lo, _ in bbox)
        X, Y = np.meshgrid(*dom_axes, indexing="ij")
        sdist = np.hypot(X - cx, Y - cy) - r
        return _finish(2, bbox, (res, res), h, sdist < 0, sdist, spec)

    if shape == "rectangle":
        (x0, y0), (x1, y1) = spec["corners"]
        x0, y0, x1, y1 = map(float, (x0, y0, x1, y1))
        if not (x1 > x0 and y1 > y0):
            raise UsageError("rectangle corners must be increasing")
        h = (x1 - x0) / res
        ny = round((y1 - y0) / h)
        if ny < MIN_RESOLUTION:
            raise DegenerateDomainError("rectangle underresolved along y")
        if abs(ny * h - (y1 - y0)) > 1e-9 * (y1 - y0):
            raise UsageError(
                "rectangle aspect ratio incompatible with a square grid "
                f"at resolution {res}"
            )
        bbox = ((x0, x1), (y0, y1))
        resolution_xy = (res, ny)
        ax = tuple(
            lo + (np.arange(n) + 0.5) * h for (lo, _), n in zip(bbox, resolution_xy)
        )
        coords = np.stack(np.meshgrid(*ax, indexing="ij"))
        sdist = _box_sdist(coords, bbox)
        return _finish(2, bbox, resolution_xy, h, sdist < 0, sdist, spec)

    if shape == "mask":
        return _mask_domain(spec)

    raise UsageError(f"unknown shape {shape!r}")


def _mask_domain(spec):
    from .io import read_pgm  # local import: io depends on domains

    path = spec.get("path")
    if path is None:
        raise UsageError("mask shape needs a 'path'")
    pixels = read_pgm(path)
    mask = pixels > 127
    nx, ny = mask.shape
    if min(nx, ny) < MIN_RESOLUTION:
        raise DegenerateDomainError("mask image underresolved")
    scale = float(spec.get("scale", 1.0 / nx))
    h = scale
    bbox = ((0.0, nx * h), (0.0, ny * h))
    # two-pass Euclidean distance transform; the half-cell offset places the
    # continuum boundary midway between an inside node and an outside node
    padded = np.pad(mask, 1, constant_values=False)
    d_in = ndimage.distance_transform_edt(padded)[1:-1, 1:-1]
    d_out = ndimage.distance_transform_edt(~padded)[1:-1, 1:-1]
    sdist = np.where(mask, -(d_in - 0.5), d_out - 0.5) * h
    # pixel quantization leaves facets in the transform; smooth them out and
    # re-impose the sign so the mask stays exactly the negative set
    sdist = ndimage.gaussian_filter(sdist, sigma=1.0, mode="nearest")
    sdist[mask] = np.minimum(sdist[mask], -0.25 * h)
    sdist[~mask] = np.maximum(sdist[~mask], 0.25 * h)
    return _finish(2, bbox, (nx, ny), h, mask, sdist, dict(spec, scale=scale))


def inradius(domain):
    """Radius of the largest inscribed ball, from the distance field."""
    return float(-(domain.sdist[domain.mask].min()))


@dataclass(frozen=True, eq=False)
class CollarSpec:
    """Boundary collar: the band of in-mask nodes within `epsilon` of the
    boundary, plus the ring of band nodes facing the domain interior."""

    domain: Domain
    epsilon: float
    band: np.ndarray
    inner_boundary: np.ndarray
    thickness: float

    def __post_init__(self):
        self.band.setflags(write=False)
        self.inner_boundary.setflags(write=False)


def collar(domain, epsilon):
    """Collar of thickness `epsilon` as a sublevel band of the distance."""
    epsilon = float(epsilon)
    rin = inradius(domain)
    if epsilon >= rin:
        raise CollarError(f"collar epsilon {epsilon} >= inradius {rin}")
    if epsilon < domain.h_grid:
        raise CollarError(
            f"collar epsilon {epsilon} below one grid cell {domain.h_grid}; "
            "band cannot contain all boundary-adjacent nodes"
        )
    band = domain.mask & (domain.sdist >= -epsilon)
    rest = domain.mask & ~band
    _check_connected(rest, CollarError, "collar complement")
    inner = band & _adjacent_to(rest)
    if inner.any():
        thickness = float(-domain.sdist[inner].max())
    else:
        thickness = float(-domain.sdist[band].min())
    return CollarSpec(
        domain=domain,
        epsilon=epsilon,
        band=band,
        inner_boundary=inner,
        thickness=thickness,
    )


def _adjacent_to(region):
    """Nodes with at least one axis-neighbor inside `region`."""
    out = np.zeros_like(region)
    for ax in range(region.ndim):
        for shift in (1, -1):
            rolled = np.roll(region, shift, axis=ax)
            edge = [slice(None)] * region.ndim
            edge[ax] = 0 if shift == 1 else -1
            rolled[tuple(edge)] = False
            out |= rolled
    return out


def grow(region, steps=1):
    """Dilate a node set by whole grid cells (axis adjacency)."""
    out = region.copy()
    for _ in range(steps):
        out = out | _adjacent_to(out)
    return out


def exhaust(domain, d):
    """Subdomain at depth `d/2`, used to reduce a solve with
    ``dist(supp(f-1), boundary) >= d`` to a smaller region whose own collar
    fits inside the vacated band."""
    d = float(d)
    rin = inradius(domain)
    if not 0 < d < rin:
        raise ExhaustionFailureError(f"exhaustion depth {d} outside (0, {rin})")
    new_mask = domain.sdist < -d / 2
    if not new_mask.any():
        raise ExhaustionFailureError("exhausted subdomain is empty")
    _check_connected(new_mask, ExhaustionFailureError, "exhausted subdomain")
    new_sdist = domain.sdist + d / 2
    sub = _finish(
        domain.dim,
        domain.bbox,
        domain.resolution,
        domain.h_grid,
        new_mask,
        new_sdist,
        None,
    )
    return replace(sub, warnings=domain.warnings)
