"""Solve div u = h with u vanishing on a boundary collar.

Pipeline (2D): a first solution u0 = grad w from a zero-flux Poisson solve,
then a correction that subtracts a divergence-free field agreeing with u0
on the collar band.  The correction is built by line-integrating the
rotated field (-u0_y, u0_x) over a spanning tree of the band (giving a
stream potential gamma), harmonically extending gamma inward, and taking
its rotated gradient, which is divergence-free for any scalar.

In 1D the first solution is already supported away from the end bands
(cumulative integral of a zero-mean datum), so no correction is applied.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import cg

from .domains import CollarSpec, _adjacent_to
from .errors import (
    InconsistentDatumError,
    NonzeroPeriodError,
    ShapeMismatchError,
    SolverStallError,
    UnsupportedTopologyError,
)
from .fields import (
    ScalarField,
    VectorField,
    cumulative_integral,
    divergence,
    gradient,
    integrate,
    rotated_gradient,
    scalar_field,
)

CG_RTOL = 1e-10


@dataclass(frozen=True)
class NeumannSolution:
    """Zero-mean potential w with Delta w = h and zero flux at the mask edge."""

    potential: ScalarField
    residual_l2: float
    iterations: int


@dataclass(frozen=True, eq=False)
class StreamPrimitive:
    """Stream potential of a divergence-free field on the collar band.

    `gamma` holds the line-integrated potential on the integration region
    (band plus up to two clean inward layers), zero elsewhere.
    `closedness_residual` is the largest cycle mismatch over contractible
    non-tree edges; re-integrating along an independent spanning tree moves
    node values by at most a small multiple of it.
    """

    gamma: ScalarField
    base_node: tuple
    closedness_residual: float
    region: np.ndarray
    collar: CollarSpec

    def __post_init__(self):
        self.region.setflags(write=False)


def _flat_indices(region):
    idx = np.full(region.shape, -1, dtype=np.int64)
    idx[region] = np.arange(int(region.sum()))
    return idx


def _neumann_matrix(mask, h):
    """-Laplacian over mask nodes with mirror (zero-flux) ghost values."""
    idx = _flat_indices(mask)
    n = int(mask.sum())
    rows, cols, vals = [], [], []
    diag = np.zeros(n)
    for ax in range(mask.ndim):
        for shift in (1, -1):
            nbr = np.roll(idx, -shift, axis=ax)
            edge = [slice(None)] * mask.ndim
            edge[ax] = -1 if shift == 1 else 0
            nbr[tuple(edge)] = -1
            ok = mask & (nbr >= 0)
            rows.append(idx[ok])
            cols.append(nbr[ok])
            vals.append(np.full(int(ok.sum()), -1.0 / h**2))
            np.add.at(diag, idx[ok], 1.0 / h**2)
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    mat = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    return mat.tocsr(), idx


def _run_cg(A, b, rtol, what, maxiter=None):
    history = []

    def cb(xk):
        history.append(float(np.linalg.norm(b - A @ xk)))

    maxiter = maxiter if maxiter is not None else min(50 * b.size, 400_000)
    x, info = cg(A, b, rtol=rtol, atol=0.0, maxiter=maxiter, callback=cb)
    if info != 0:
        raise SolverStallError(
            f"{what}: conjugate gradients stalled (info={info}, "
            f"{len(history)} iterations)",
            residual_history=history,
        )
    return x, len(history), float(np.linalg.norm(b - A @ x))


def check_zero_mean(h: ScalarField, rel=0.01):
    """Compatibility gate for the divergence equation's datum."""
    total = integrate(h)
    scale = integrate(
        ScalarField(domain=h.domain, values=np.abs(h.values), fill_kind="zero")
    )
    if abs(total) > max(rel * scale, 1e-300):
        raise InconsistentDatumError(
            f"datum has nonzero mean: integral {total:.3e} vs L1 mass {scale:.3e}"
        )


def solve_neumann(h: ScalarField, rtol=CG_RTOL) -> NeumannSolution:
    """Zero-mean solution of the zero-flux Poisson problem Delta w = h.

    The datum is projected to exact zero (unweighted) mean over the mask
    first, which is the discrete solvability condition of the mirror-ghost
    Laplacian.
    """
    check_zero_mean(h)
    dom = h.domain
    A, idx = _neumann_matrix(dom.mask, dom.h_grid)
    b = h.values[dom.mask].astype(np.float64)
    b -= b.mean()
    x, iters, res = _run_cg(A, -b, rtol, "Neumann solve")
    w = np.zeros(dom.grid_shape)
    w[dom.mask] = x
    wf = scalar_field(dom, w, fill_kind="zero")
    shift = integrate(wf) / dom.measure()
    w[dom.mask] -= shift
    return NeumannSolution(
        potential=scalar_field(dom, w, fill_kind="zero"),
        residual_l2=res,
        iterations=iters,
    )


def solve_div_basic(h: ScalarField) -> VectorField:
    """First solution u0 = grad w of div u = h; zero normal flux at the
    boundary but generally nonzero tangentially."""
    return gradient(solve_neumann(h).potential)


def _edge_increment(u0x, u0y, pa, pb, axis, sign, h):
    """Trapezoidal integral of (-u0_y, u0_x) along the grid edge a -> b."""
    if axis == 0:
        return sign * h * (-(u0y[pa] + u0y[pb]) / 2.0)
    return sign * h * ((u0x[pa] + u0x[pb]) / 2.0)


_NEIGHBOR_ORDERS = {
    "standard": ((0, 1), (0, -1), (1, 1), (1, -1)),
    "reverse": ((1, -1), (1, 1), (0, -1), (0, 1)),
}


def stream_primitive(
    u0: VectorField,
    collar: CollarSpec,
    tol_div=None,
    tol_period=None,
    neighbor_order="standard",
) -> StreamPrimitive:
    """Integrate the 1-form dual to u0 into a stream potential on the band.

    Requires u0 to be discretely divergence-free on the band and the band's
    period (circulation of the dual form around the annulus) to vanish.
    The integration region is grown up to two cells inward of the band
    wherever the divergence stays below tolerance, so that later derivative
    stencils on the band never touch the harmonic extension.
    """
    dom = u0.domain
    if dom.dim != 2:
        raise ShapeMismatchError("stream potentials require a 2D domain")
    if dom.boundary_components != 1:
        raise UnsupportedTopologyError(
            f"boundary has {dom.boundary_components} components; "
            "stream-potential correction supports exactly one"
        )
    band = collar.band
    dv = divergence(u0)
    dv_mask_max = float(np.abs(dv.values[dom.mask]).max(initial=0.0))
    if tol_div is None:
        tol_div = max(1e-8 * (1.0 + dv_mask_max), 0.1 * dv_mask_max)
    band_div = float(np.abs(dv.values[band]).max(initial=0.0))
    if band_div > tol_div:
        raise InconsistentDatumError(
            f"u0 is not divergence-free on the band: {band_div:.3e} > {tol_div:.3e}"
        )

    clean = np.abs(dv.values) <= tol_div
    layer1 = dom.mask & ~band & _adjacent_to(band)
    if not clean[layer1].all():
        raise InconsistentDatumError(
            "datum must vanish one cell inward of the band (slack rule); "
            f"{int((~clean[layer1]).sum())} offending nodes"
        )
    region = band | layer1
    layer2 = dom.mask & ~region & _adjacent_to(region) & clean
    region = region | layer2

    # base node: westernmost node of the region on the domain-boundary side
    boundary_ring = region & _adjacent_to(~dom.mask)
    if not boundary_ring.any():
        boundary_ring = region
    ij = np.argwhere(boundary_ring)
    base = tuple(ij[0])

    u0x, u0y = u0.components[0], u0.components[1]
    h = dom.h_grid
    centroid = dom.coords()[:, dom.mask].mean(axis=1)
    xs, ys = dom.axes()

    def angle(p):
        return np.arctan2(ys[p[1]] - centroid[1], xs[p[0]] - centroid[0])

    nx, ny = dom.grid_shape
    gamma = np.zeros(dom.grid_shape)
    theta = np.zeros(dom.grid_shape)
    visited = np.zeros(dom.grid_shape, dtype=bool)
    parent_edge = np.zeros(dom.grid_shape, dtype=bool)  # marks tree edges at child
    visited[base] = True
    order = _NEIGHBOR_ORDERS[neighbor_order]
    queue = deque([base])
    tree_edges = set()
    while queue:
        p = queue.popleft()
        for axis, sign in order:
            q = (p[0] + sign, p[1]) if axis == 0 else (p[0], p[1] + sign)
            if not (0 <= q[0] < nx and 0 <= q[1] < ny) or not region[q]:
                continue
            if visited[q]:
                continue
            visited[q] = True
            gamma[q] = gamma[p] + _edge_increment(u0x, u0y, p, q, axis, sign, h)
            da = angle(q) - angle(p)
            da = (da + np.pi) % (2 * np.pi) - np.pi
            theta[q] = theta[p] + da
            tree_edges.add((p, q) if p < q else (q, p))
            queue.append(q)
    if not visited[region].all():
        raise UnsupportedTopologyError("collar integration region is disconnected")

    # non-tree edges: cycle mismatches split by winding number around the hole
    closedness = 0.0
    period = 0.0
    for axis in range(2):
        a_idx = np.argwhere(region & _shift_in(region, axis))
        for p in map(tuple, a_idx):
            q = (p[0] + 1, p[1]) if axis == 0 else (p[0], p[1] + 1)
            if (p, q) in tree_edges:
                continue
            inc = _edge_increment(u0x, u0y, p, q, axis, 1, h)
            mismatch = abs(gamma[p] + inc - gamma[q])
            da = angle(q) - angle(p)
            da = (da + np.pi) % (2 * np.pi) - np.pi
            wind = round((theta[p] + da - theta[q]) / (2 * np.pi))
            if wind == 0:
                closedness = max(closedness, mismatch)
            else:
                period = max(period, mismatch / abs(wind))

    umax = float(np.abs(u0.components[:, band]).max(initial=0.0))
    if tol_period is None:
        tol_period = max(1e-6, 0.01 * (1.0 + umax))
    if period > tol_period:
        raise NonzeroPeriodError(
            f"nonzero period {period:.3e} around the collar (tol {tol_period:.3e}); "
            "datum nonzero inside the collar or unsupported topology"
        )

    gamma[~region] = 0.0
    return StreamPrimitive(
        gamma=scalar_field(dom, gamma, fill_kind="zero"),
        base_node=base,
        closedness_residual=closedness,
        region=region,
        collar=collar,
    )


def _shift_in(region, axis):
    """region shifted by -1 along axis: True where the +1 neighbor exists."""
    out = np.zeros_like(region)
    src = [slice(None)] * region.ndim
    dst = [slice(None)] * region.ndim
    src[axis] = slice(1, None)
    dst[axis] = slice(None, -1)
    out[tuple(dst)] = region[tuple(src)]
    return out


def extend_primitive(gp: StreamPrimitive, rtol=CG_RTOL) -> ScalarField:
    """Extend the stream potential to the whole region: exact node values on
    the integration region, discrete-harmonic inside (Dirichlet data on the
    region's inner fringe)."""
    dom = gp.gamma.domain
    region = gp.region
    inner = dom.mask & ~region
    out = gp.gamma.values.copy()
    if not inner.any():
        return scalar_field(dom, out, fill_kind="zero")
    h = dom.h_grid
    idx = _flat_indices(inner)
    n = int(inner.sum())
    rows, cols, vals = [], [], []
    diag = np.zeros(n)
    b = np.zeros(n)
    for ax in range(2):
        for shift in (1, -1):
            nbr_idx = np.roll(idx, -shift, axis=ax)
            nbr_mask = np.roll(dom.mask, -shift, axis=ax)
            nbr_region = np.roll(region, -shift, axis=ax)
            nbr_gamma = np.roll(gp.gamma.values, -shift, axis=ax)
            edge = [slice(None)] * 2
            edge[ax] = -1 if shift == 1 else 0
            nbr_idx[tuple(edge)] = -1
            nbr_mask[tuple(edge)] = False
            nbr_region[tuple(edge)] = False
            free = inner & (nbr_idx >= 0)
            rows.append(idx[free])
            cols.append(nbr_idx[free])
            vals.append(np.full(int(free.sum()), -1.0 / h**2))
            np.add.at(diag, idx[free], 1.0 / h**2)
            fixed = inner & nbr_region & nbr_mask
            np.add.at(diag, idx[fixed], 1.0 / h**2)
            np.add.at(b, idx[fixed], nbr_gamma[fixed] / h**2)
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    A = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tocsr()
    x, _, _ = _run_cg(A, b, rtol, "harmonic extension")
    out[inner] = x
    return scalar_field(dom, out, fill_kind="zero")


def solve_div_collar(h: ScalarField, collar: CollarSpec, tol_div=None, details=None):
    """Solve div u = h with u ~ 0 on the collar band.

    The correspondence h -> u is linear: every stage is a linear solve or a
    line integral.  Pass a dict as `details` to capture the intermediate
    fields (potential, first solution, stream potential, extension).
    """
    dom = h.domain
    if dom is not collar.domain and not dom.same_grid(collar.domain):
        raise ShapeMismatchError("datum and collar live on different grids")
    band_max = float(np.abs(h.values[collar.band]).max(initial=0.0))
    if band_max > 1e-12:
        raise InconsistentDatumError(
            f"datum must vanish on the collar band; max |h| on band = {band_max:.3e}"
        )
    check_zero_mean(h)
    if dom.dim == 1:
        # one dimension admits a direct supported solution: the cumulative
        # antiderivative of the (exactly mean-projected) datum, which
        # vanishes identically on both end bands for band-supported data
        g = h.values[dom.mask].astype(np.float64)
        g -= g.mean()
        u = np.zeros((1,) + dom.grid_shape)
        u[0][dom.mask] = cumulative_integral(g, dom.h_grid)
        u1 = VectorField(domain=dom, components=u)
        if details is not None:
            details["solution"] = u1
        return u1
    neumann = solve_neumann(h)
    u0 = gradient(neumann.potential)
    if details is not None:
        details["potential"] = neumann.potential
        details["first_solution"] = u0
    gp = stream_primitive(u0, collar, tol_div=tol_div)
    gamma_ext = extend_primitive(gp)
    correction = rotated_gradient(gamma_ext)
    u = VectorField(domain=dom, components=u0.components - correction.components)
    if details is not None:
        details["stream"] = gp
        details["extension"] = gamma_ext
        details["solution"] = u
    return u
