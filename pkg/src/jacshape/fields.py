"""Scalar and vector fields on a domain grid, with the discrete operators
used throughout: derivatives, divergence, Jacobian determinants, masked
quadrature, Hölder-norm estimation and mollification.

Derivatives are second-order central differences at nodes whose axis
neighbors are in-mask, and second-order one-sided differences at mask-edge
nodes (falling back to first order when only one neighbor exists).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .domains import Domain
from .errors import (
    DegenerateDomainError,
    DegenerateRegionError,
    KernelUnderresolvedError,
    ShapeMismatchError,
    UnsupportedOrderError,
    UsageError,
)

FILL_VALUES = {"one": 1.0, "zero": 0.0}

#: node-pair budget for exhaustive Hölder seminorm scans
DEFAULT_PAIR_BUDGET = 4_000_000


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real samples on the domain grid.  Out-of-mask nodes hold the fill
    value: 1 for density-like fields (which extend by 1 outside the region)
    and 0 otherwise."""

    domain: Domain
    values: np.ndarray
    fill_kind: str = "zero"

    def __post_init__(self):
        if self.fill_kind not in FILL_VALUES:
            raise UsageError(f"unknown fill_kind {self.fill_kind!r}")
        if self.values.shape != self.domain.grid_shape:
            raise ShapeMismatchError(
                f"values shape {self.values.shape} != grid {self.domain.grid_shape}"
            )
        if not np.isfinite(self.values[self.domain.mask]).all():
            raise UsageError("non-finite values at in-mask nodes")
        self.values.setflags(write=False)

    @property
    def fill_value(self):
        return FILL_VALUES[self.fill_kind]

    def masked(self):
        """Values at in-mask nodes, flat."""
        return self.values[self.domain.mask]


def scalar_field(domain, values, fill_kind="zero"):
    """Wrap an array as a ScalarField, forcing the fill outside the mask."""
    values = np.array(values, dtype=np.float64)
    if values.shape != domain.grid_shape:
        raise ShapeMismatchError(
            f"values shape {values.shape} != grid {domain.grid_shape}"
        )
    values[~domain.mask] = FILL_VALUES[fill_kind]
    return ScalarField(domain=domain, values=values, fill_kind=fill_kind)


def constant_field(domain, c, fill_kind="one"):
    return scalar_field(domain, np.full(domain.grid_shape, float(c)), fill_kind)


def sample_field(domain, fn, fill_kind="zero"):
    """Sample ``fn(x[, y])`` at the grid nodes."""
    return scalar_field(domain, fn(*domain.coords()), fill_kind)


@dataclass(frozen=True, eq=False)
class VectorField:
    """One array per spatial component, shape (dim, *grid_shape)."""

    domain: Domain
    components: np.ndarray

    def __post_init__(self):
        if self.components.shape != (self.domain.dim,) + self.domain.grid_shape:
            raise ShapeMismatchError(
                f"components shape {self.components.shape} incompatible with "
                f"{self.domain.dim}D grid {self.domain.grid_shape}"
            )
        if not np.isfinite(self.components[(slice(None),) + np.nonzero(self.domain.mask)]).all():
            raise UsageError("non-finite vector values at in-mask nodes")
        self.components.setflags(write=False)

    def component(self, i):
        return self.components[i]

    def magnitude(self):
        return np.sqrt((self.components**2).sum(axis=0))


def vector_field(domain, components):
    comps = np.array(components, dtype=np.float64)
    if comps.shape != (domain.dim,) + domain.grid_shape:
        raise ShapeMismatchError(
            f"components shape {comps.shape} incompatible with grid"
        )
    comps[(slice(None),) + np.nonzero(~domain.mask)] = 0.0
    return VectorField(domain=domain, components=comps)


def zero_vector_field(domain):
    return VectorField(
        domain=domain, components=np.zeros((domain.dim,) + domain.grid_shape)
    )


@dataclass(frozen=True)
class HolderEstimate:
    """Discrete Hölder-norm estimate.  `value` is a lower bound of the
    continuum norm; `pair_budget` records how many node pairs were scanned."""

    order_r: int
    exponent_alpha: float
    value: float
    pair_budget: int


# ---------------------------------------------------------------------------
# derivatives
# ---------------------------------------------------------------------------


def _shifted(arr, axis, step):
    """arr sampled at index+step along axis, invalid entries filled with 0."""
    out = np.zeros_like(arr)
    src = [slice(None)] * arr.ndim
    dst = [slice(None)] * arr.ndim
    if step > 0:
        src[axis] = slice(step, None)
        dst[axis] = slice(None, -step)
    else:
        src[axis] = slice(None, step)
        dst[axis] = slice(-step, None)
    out[tuple(dst)] = arr[tuple(src)]
    return out


def _axis_derivative(values, mask, h, axis):
    """Masked partial derivative along one axis (see module docstring)."""
    m = mask
    vp1 = _shifted(values, axis, 1)
    vm1 = _shifted(values, axis, -1)
    vp2 = _shifted(values, axis, 2)
    vm2 = _shifted(values, axis, -2)
    mp1 = _shifted(m, axis, 1)
    mm1 = _shifted(m, axis, -1)
    mp2 = _shifted(m, axis, 2)
    mm2 = _shifted(m, axis, -2)

    out = np.zeros_like(values, dtype=np.float64)
    central = m & mp1 & mm1
    out[central] = (vp1[central] - vm1[central]) / (2 * h)
    fwd2 = m & ~mm1 & mp1 & mp2
    out[fwd2] = (-3 * values[fwd2] + 4 * vp1[fwd2] - vp2[fwd2]) / (2 * h)
    bwd2 = m & ~mp1 & mm1 & mm2
    out[bwd2] = (3 * values[bwd2] - 4 * vm1[bwd2] + vm2[bwd2]) / (2 * h)
    fwd1 = m & ~mm1 & mp1 & ~mp2
    out[fwd1] = (vp1[fwd1] - values[fwd1]) / h
    bwd1 = m & ~mp1 & mm1 & ~mm2
    out[bwd1] = (values[bwd1] - vm1[bwd1]) / h
    return out


def gradient(f: ScalarField) -> VectorField:
    """Discrete gradient; zero outside the mask."""
    dom = f.domain
    if not dom.interior_mask(1).any():
        raise DegenerateDomainError("domain has no interior node for derivatives")
    comps = np.stack(
        [
            _axis_derivative(f.values, dom.mask, dom.h_grid, ax)
            for ax in range(dom.dim)
        ]
    )
    return VectorField(domain=dom, components=comps)


def vector_gradient(u: VectorField) -> np.ndarray:
    """All partials of a vector field: shape (dim, dim, *grid), entry
    [i, j] = d u_i / d x_j."""
    dom = u.domain
    return np.stack(
        [
            np.stack(
                [
                    _axis_derivative(u.components[i], dom.mask, dom.h_grid, ax)
                    for ax in range(dom.dim)
                ]
            )
            for i in range(dom.dim)
        ]
    )


def divergence(u: VectorField) -> ScalarField:
    """Discrete divergence with the same stencils as `gradient`, which makes
    the pair a summation-by-parts adjoint pair away from the mask edge."""
    dom = u.domain
    out = np.zeros(dom.grid_shape)
    for ax in range(dom.dim):
        out += _axis_derivative(u.components[ax], dom.mask, dom.h_grid, ax)
    return ScalarField(domain=dom, values=out, fill_kind="zero")


def rotated_gradient(g: ScalarField) -> VectorField:
    """(d g / dy, -d g / dx): a divergence-free field for any scalar g."""
    dom = g.domain
    if dom.dim != 2:
        raise ShapeMismatchError("rotated gradient requires a 2D domain")
    gx = _axis_derivative(g.values, dom.mask, dom.h_grid, 0)
    gy = _axis_derivative(g.values, dom.mask, dom.h_grid, 1)
    return VectorField(domain=dom, components=np.stack([gy, -gx]))


def jacobian_det(phi) -> ScalarField:
    """Determinant of the central-difference Jacobian of a grid map.

    Outside the mask the map is the identity, so the determinant field
    fills with 1.
    """
    disp = phi.displacement
    dom = disp.domain
    jac = vector_gradient(disp)
    if dom.dim == 1:
        det = 1.0 + jac[0, 0]
    else:
        det = (1.0 + jac[0, 0]) * (1.0 + jac[1, 1]) - jac[0, 1] * jac[1, 0]
    det = np.where(dom.mask, det, 1.0)
    return ScalarField(domain=dom, values=det, fill_kind="one")


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------


def integrate(f: ScalarField) -> float:
    """Mask-weighted quadrature of `f` over the region.  Boundary cells are
    weighted by the inside fraction estimated from the signed distance, so
    the out-of-mask fill participates exactly as the continuum extension
    would."""
    return float((f.values * f.domain.quad_weights()).sum())


def inner_product(a, b) -> float:
    """Unweighted node-wise inner product (scalar or vector fields)."""
    if isinstance(a, VectorField):
        return float((a.components * b.components).sum())
    return float((a.values * b.values).sum())


# fourth-order cell integrals on the midpoint lattice: interior cells use the
# centered 4-point rule, end cells and the two boundary half-cells use
# one-sided cubics
_CELL_W = np.array([-1.0, 13.0, 13.0, -1.0]) / 24.0
_END_CELL_W = np.array([9.0, 19.0, -5.0, 1.0]) / 24.0
_HALF_CELL_W = np.array([297.0, -187.0, 107.0, -25.0]) / 384.0


def cumulative_integral(values, h):
    """Cumulative integral C_i = integral from the left box edge to node i
    of the sampled function, fourth-order accurate on cell-centered nodes.

    Away from the ends every sample carries total weight h, so compactly
    supported exact-zero-sum data integrate to exactly zero.
    """
    g = np.asarray(values, dtype=np.float64)
    n = g.size
    if g.ndim != 1 or n < 8:
        raise ShapeMismatchError("cumulative integral needs a 1D array, n >= 8")
    cells = np.empty(n)
    cells[0] = h * (_HALF_CELL_W @ g[:4])
    cells[1] = h * (_END_CELL_W @ g[:4])
    inner = (
        _CELL_W[0] * g[0 : n - 3]
        + _CELL_W[1] * g[1 : n - 2]
        + _CELL_W[2] * g[2 : n - 1]
        + _CELL_W[3] * g[3:n]
    )
    cells[2 : n - 1] = h * inner
    cells[n - 1] = h * (_END_CELL_W @ g[-1:-5:-1])
    return np.cumsum(cells)


def total_integral_1d(values, h):
    """Integral over the whole interval with the same fourth-order rule."""
    g = np.asarray(values, dtype=np.float64)
    tail = h * (_HALF_CELL_W @ g[-1:-5:-1])
    return float(cumulative_integral(g, h)[-1] + tail)


# ---------------------------------------------------------------------------
# Hölder norms
# ---------------------------------------------------------------------------


def _pair_scan(coords, vals, alpha, pair_budget):
    """Sup over node pairs of |df| / dist^alpha, with deterministic strided
    subsampling once the exhaustive pair count exceeds the budget."""
    n = coords.shape[0]
    total_pairs = n * (n - 1) // 2
    if total_pairs > pair_budget:
        m = int((1 + np.sqrt(1 + 8 * pair_budget)) // 2)
        stride = int(np.ceil(n / m))
        coords = coords[::stride]
        vals = vals[::stride]
        n = coords.shape[0]
    scanned = n * (n - 1) // 2
    best = 0.0
    block = 512
    for i0 in range(0, n, block):
        i1 = min(i0 + block, n)
        d = coords[i0:i1, None, :] - coords[None, i0:, :]
        dist = np.sqrt((d**2).sum(axis=-1))
        dv = np.abs(vals[i0:i1, None] - vals[None, i0:])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = dv / dist**alpha
        ratio[~np.isfinite(ratio)] = 0.0
        best = max(best, float(ratio.max(initial=0.0)))
    return best, scanned


def holder_seminorm(f: ScalarField, alpha, region=None, pair_budget=DEFAULT_PAIR_BUDGET):
    """[f]_alpha over a node region (default: the whole mask).  A lower
    bound of the continuum seminorm."""
    if not 0 < alpha <= 1:
        raise UsageError(f"alpha must lie in (0, 1], got {alpha}")
    dom = f.domain
    if region is None:
        region = dom.mask
    idx = np.nonzero(region)
    if idx[0].size < 2:
        raise DegenerateRegionError("Hölder seminorm needs at least 2 nodes")
    coords = np.stack([c[idx] for c in dom.coords()], axis=-1)
    value, _ = _pair_scan(coords, f.values[idx], alpha, pair_budget)
    return value


def holder_norm(f: ScalarField, r, alpha, pair_budget=DEFAULT_PAIR_BUDGET):
    """Discrete C^{r,alpha} norm: max-norms of f and its first r discrete
    derivatives, plus the alpha-seminorm of the top-order derivatives."""
    if r not in (0, 1):
        raise UnsupportedOrderError(f"Hölder norms support r in {{0, 1}}, got {r}")
    if not 0 < alpha <= 1:
        raise UsageError(f"alpha must lie in (0, 1], got {alpha}")
    dom = f.domain
    idx = np.nonzero(dom.mask)
    coords = np.stack([c[idx] for c in dom.coords()], axis=-1)
    sup = float(np.abs(f.values[idx]).max())
    if r == 0:
        tops = [f.values]
    else:
        grad = gradient(f)
        tops = [grad.components[ax] for ax in range(dom.dim)]
        sup = max(sup, *(float(np.abs(t[idx]).max()) for t in tops))
    semi = 0.0
    scanned = 0
    for t in tops:
        s, scanned = _pair_scan(coords, t[idx], alpha, pair_budget)
        semi = max(semi, s)
    return HolderEstimate(
        order_r=r, exponent_alpha=float(alpha), value=sup + semi, pair_budget=scanned
    )


def holder_norm_vector(u: VectorField, r, alpha, pair_budget=DEFAULT_PAIR_BUDGET):
    """Max of the component-wise Hölder norms."""
    fields = [
        ScalarField(domain=u.domain, values=u.components[i].copy(), fill_kind="zero")
        for i in range(u.domain.dim)
    ]
    return max(holder_norm(g, r, alpha, pair_budget).value for g in fields)


# ---------------------------------------------------------------------------
# mollification
# ---------------------------------------------------------------------------


def mollifier_kernel(radius, h, dim):
    """The standard bump exp(-1/(1-|x/radius|^2)) sampled on grid offsets
    and renormalized to unit discrete mass."""
    if radius < 2 * h:
        raise KernelUnderresolvedError(
            f"mollifier radius {radius} < 2 grid cells ({2 * h})"
        )
    m = int(np.ceil(radius / h))
    offs = np.arange(-m, m + 1) * h
    if dim == 1:
        rho2 = (offs / radius) ** 2
    else:
        rho2 = (offs[:, None] ** 2 + offs[None, :] ** 2) / radius**2
    with np.errstate(divide="ignore", over="ignore"):
        kernel = np.where(rho2 < 1.0, np.exp(-1.0 / np.maximum(1.0 - rho2, 1e-300)), 0.0)
    return kernel / kernel.sum()


def mollify(f: ScalarField, radius) -> ScalarField:
    """Convolve a density-like field with the normalized bump kernel.  The
    field is extended by 1 beyond the grid, so nodes whose kernel ball
    misses supp(f-1) come out exactly 1."""
    if f.fill_kind != "one":
        raise UsageError("mollify requires a density-like field (fill_kind='one')")
    dom = f.domain
    kernel = mollifier_kernel(float(radius), dom.h_grid, dom.dim)
    smoothed = ndimage.convolve(f.values, kernel, mode="constant", cval=1.0)
    return scalar_field(dom, smoothed, fill_kind="one")
