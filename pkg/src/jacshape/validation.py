"""Input validation helpers shared by the estimator facade and the CLI."""

from __future__ import annotations

import numpy as np

from .domains import Domain
from .errors import ShapeMismatchError, UsageError
from .fields import ScalarField, scalar_field


def as_density(f, domain: Domain | None = None) -> ScalarField:
    """Coerce a ScalarField or array (+ domain) into a density field."""
    if isinstance(f, ScalarField):
        if f.fill_kind != "one":
            return scalar_field(f.domain, f.values, fill_kind="one")
        return f
    if domain is None:
        raise UsageError("array densities need an explicit domain")
    arr = np.asarray(f, dtype=np.float64)
    if arr.shape != domain.grid_shape:
        raise ShapeMismatchError(
            f"density shape {arr.shape} does not match grid {domain.grid_shape}"
        )
    return scalar_field(domain, arr, fill_kind="one")


def check_points(X, dim) -> np.ndarray:
    """Validate a point array of shape (n, dim) (a bare (n,) is accepted
    for 1D)."""
    pts = np.asarray(X, dtype=np.float64)
    if dim == 1 and pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise ShapeMismatchError(
            f"points must have shape (n, {dim}); got {pts.shape}"
        )
    if not np.isfinite(pts).all():
        raise UsageError("points must be finite")
    return pts


def check_same_grid(a, b, what="inputs"):
    dom_a = getattr(a, "domain", a)
    dom_b = getattr(b, "domain", b)
    if not dom_a.same_grid(dom_b):
        raise ShapeMismatchError(f"{what} live on different grids")
    return dom_a
