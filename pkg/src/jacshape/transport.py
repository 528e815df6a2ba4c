"""Grid maps (identity + displacement samples) and their algebra:
interpolation, composition, Newton inversion, and the time-dependent flow
that turns a divergence solution into a map with prescribed Jacobian
determinant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .divsolve import solve_div_collar
from .errors import (
    FlowAccuracyError,
    InconsistentDatumError,
    InversionFailureError,
    OrientationLossError,
    OutOfRangeError,
    PositivityError,
    ShapeMismatchError,
    UsageError,
)
from .fields import (
    ScalarField,
    VectorField,
    divergence,
    gradient,
    holder_norm,
    holder_norm_vector,
    integrate,
    jacobian_det,
    scalar_field,
    vector_gradient,
    zero_vector_field,
)
from .report import SolveReport

INTERP_METHODS = ("bilinear", "bicubic")

#: default relative mass tolerance for density data
MASS_RTOL = 0.005

HOLDER_GAMMA = 0.5


@dataclass(frozen=True, eq=False)
class GridMap:
    """Discrete map of the closed region into itself, stored as
    displacement samples: map(node) = node + displacement[node]."""

    displacement: VectorField
    interp: str = "bilinear"

    def __post_init__(self):
        if self.interp not in INTERP_METHODS:
            raise UsageError(f"unknown interpolation {self.interp!r}")

    @property
    def domain(self):
        return self.displacement.domain

    def node_positions(self):
        """Mapped node coordinates, shape (dim, *grid)."""
        return self.domain.coords() + self.displacement.components


@dataclass(frozen=True)
class FlowConfig:
    time_steps: int = 16
    integrator: str = "rk4"
    interp: str = "bilinear"
    clamp_to_domain: bool = True

    def __post_init__(self):
        if self.time_steps < 8:
            raise UsageError("flow needs at least 8 time steps")
        if self.integrator != "rk4":
            raise UsageError(f"unknown integrator {self.integrator!r}")
        if self.interp not in INTERP_METHODS:
            raise UsageError(f"unknown interpolation {self.interp!r}")


def identity_map(domain, interp="bilinear"):
    return GridMap(displacement=zero_vector_field(domain), interp=interp)


# ---------------------------------------------------------------------------
# interpolation
# ---------------------------------------------------------------------------


def _continuous_index(domain, points):
    pts = np.asarray(points, dtype=np.float64)
    idx = np.empty_like(pts)
    for k, (lo, _hi) in enumerate(domain.bbox):
        idx[..., k] = (pts[..., k] - lo) / domain.h_grid - 0.5
    return idx


def _interp(values, domain, points, method):
    """Interpolate grid samples at physical points (clamped beyond the
    cell-center hull).  Exact lattice hits reproduce stored values
    bit-exactly for either method."""
    idx = _continuous_index(domain, points)
    n = np.array(domain.grid_shape, dtype=np.float64)
    idx = np.clip(idx, 0.0, n - 1.0)
    if method == "bilinear":
        base = np.minimum(np.floor(idx), n - 2).astype(np.int64)
        base = np.maximum(base, 0)
        t = idx - base
        if domain.dim == 1:
            v0 = values[base[..., 0]]
            v1 = values[base[..., 0] + 1]
            return v0 * (1.0 - t[..., 0]) + v1 * t[..., 0]
        i, j = base[..., 0], base[..., 1]
        tx, ty = t[..., 0], t[..., 1]
        v00 = values[i, j]
        v10 = values[i + 1, j]
        v01 = values[i, j + 1]
        v11 = values[i + 1, j + 1]
        return (
            v00 * (1 - tx) * (1 - ty)
            + v10 * tx * (1 - ty)
            + v01 * (1 - tx) * ty
            + v11 * tx * ty
        )
    coords = [idx[..., k] for k in range(domain.dim)]
    out = ndimage.map_coordinates(values, coords, order=3, mode="nearest")
    # patch exact lattice hits for bit-exact reproduction of node values
    nearest = np.rint(idx)
    exact = np.all(idx == nearest, axis=-1)
    if np.any(exact):
        ints = nearest.astype(np.int64)
        gathered = values[tuple(ints[exact, k] for k in range(domain.dim))]
        out = np.asarray(out)
        out[exact] = gathered
    return out


def interpolate_scalar(f: ScalarField, points, method="bilinear"):
    return _interp(f.values, f.domain, points, method)


def _interp_components(comps, domain, points, method):
    return np.stack(
        [_interp(comps[k], domain, points, method) for k in range(domain.dim)],
        axis=-1,
    )


def map_points(phi: GridMap, points):
    """phi evaluated at arbitrary points (no range validation)."""
    disp = _interp_components(
        phi.displacement.components, phi.domain, points, phi.interp
    )
    return np.asarray(points, dtype=np.float64) + disp


def eval_map(phi: GridMap, points):
    """phi at the given points; raises when a point leaves the bounding box."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[None, :]
    slack = 1e-9 * phi.domain.diameter()
    for k, (lo, hi) in enumerate(phi.domain.bbox):
        bad = (pts[..., k] < lo - slack) | (pts[..., k] > hi + slack)
        if bad.any():
            raise OutOfRangeError(
                f"{int(bad.sum())} evaluation points outside the bounding box"
            )
    return map_points(phi, pts)


# ---------------------------------------------------------------------------
# composition and inversion
# ---------------------------------------------------------------------------


def compose(phi2: GridMap, phi1: GridMap) -> GridMap:
    """Node-wise sampled composition phi2 after phi1."""
    if not phi1.domain.same_grid(phi2.domain):
        raise ShapeMismatchError("composition requires maps on the same grid")
    dom = phi1.domain
    mid = np.moveaxis(phi1.node_positions(), 0, -1)
    disp2 = _interp_components(phi2.displacement.components, dom, mid, phi2.interp)
    total = phi1.displacement.components + np.moveaxis(disp2, -1, 0)
    out = GridMap(
        displacement=VectorField(domain=dom, components=total), interp=phi1.interp
    )
    det = jacobian_det(out)
    if det.masked().min() <= 0:
        raise OrientationLossError(
            f"composed map loses orientation: min det = {det.masked().min():.3e}"
        )
    return out


def invert(phi: GridMap, rtol=1e-10, max_iter=50, max_damping=30) -> GridMap:
    """Invert a grid map by damped Newton iteration at every in-mask node.

    Nodes that fail from the identity seed are retried from already-solved
    neighbor values before reporting failure.
    """
    dom = phi.domain
    det = jacobian_det(phi)
    if det.masked().min() <= 0:
        raise OrientationLossError("cannot invert a map with nonpositive Jacobian")
    tol = rtol * dom.diameter()
    targets = dom.coords()[:, dom.mask].T  # (m, dim)
    comps = phi.displacement.components
    jac_field = vector_gradient(phi.displacement)  # (dim, dim, *grid)

    def residual(x):
        return x + _interp_components(comps, dom, x, phi.interp) - targets

    def jac_at(x):
        J = np.empty(x.shape[:1] + (dom.dim, dom.dim))
        for i in range(dom.dim):
            for j in range(dom.dim):
                J[:, i, j] = _interp(jac_field[i, j], dom, x, "bilinear")
            J[:, i, i] += 1.0
        return J

    lo = np.array([b[0] for b in dom.bbox])
    hi = np.array([b[1] for b in dom.bbox])

    def residual_subset(x, active):
        return x + _interp_components(comps, dom, x, phi.interp) - targets[active]

    def newton(x):
        rn = np.linalg.norm(residual(x), axis=-1)
        for _ in range(max_iter):
            active = rn > tol
            if not active.any():
                break
            xa = x[active]
            ra = residual_subset(xa, active)
            J = jac_at(xa)
            try:
                step = -np.linalg.solve(J, ra[..., None])[..., 0]
            except np.linalg.LinAlgError:
                step = -ra
            lam = np.ones(step.shape[0])
            ra_n = rn[active]
            new_x = xa.copy()
            new_rn = ra_n.copy()
            pending = np.ones(step.shape[0], dtype=bool)
            for _trial in range(max_damping):
                cand = np.clip(xa + lam[:, None] * step, lo, hi)
                cn = np.linalg.norm(residual_subset(cand, active), axis=-1)
                improved = pending & (cn < ra_n)
                new_x[improved] = cand[improved]
                new_rn[improved] = cn[improved]
                pending &= ~improved
                if not pending.any():
                    break
                lam[pending] *= 0.5
            x[active] = new_x
            rn[active] = new_rn
        return x, rn

    x, rn = newton(targets.copy())
    if (rn > tol).any():
        # neighbor seeding: average of solved neighbors on the grid
        failed = rn > tol
        sol = np.full(dom.grid_shape + (dom.dim,), np.nan)
        sol[dom.mask] = np.where(failed[:, None], np.nan, x)
        seeds = x.copy()
        fail_idx = np.argwhere(dom.mask)[failed]
        for row, node in zip(np.flatnonzero(failed), fail_idx):
            acc, cnt = np.zeros(dom.dim), 0
            for ax in range(dom.dim):
                for s in (-1, 1):
                    nb = node.copy()
                    nb[ax] += s
                    if (0 <= nb).all() and (nb < dom.grid_shape).all():
                        v = sol[tuple(nb)]
                        if np.isfinite(v).all():
                            acc += v
                            cnt += 1
            if cnt:
                seeds[row] = acc / cnt
        x2, rn2 = newton(seeds)
        better = rn2 < rn
        x[better] = x2[better]
        rn[better] = rn2[better]
        if (rn > tol).any():
            nodes = [tuple(map(int, n)) for n in np.argwhere(dom.mask)[rn > tol]]
            raise InversionFailureError(
                f"Newton inversion failed at {len(nodes)} nodes", failed_nodes=nodes
            )
    disp = np.zeros((dom.dim,) + dom.grid_shape)
    disp[(slice(None),) + np.nonzero(dom.mask)] = (x - targets).T
    return GridMap(
        displacement=VectorField(domain=dom, components=disp), interp=phi.interp
    )


# ---------------------------------------------------------------------------
# Moser flow
# ---------------------------------------------------------------------------


def moser_velocity(f: ScalarField, v: VectorField, t) -> VectorField:
    """Velocity -v / (t f + 1 - t) of the density interpolation flow."""
    if not 0.0 <= t <= 1.0:
        raise UsageError(f"flow time {t} outside [0, 1]")
    denom = t * f.values + (1.0 - t)
    bad = denom[f.domain.mask].min(initial=np.inf)
    if bad <= 0:
        raise PositivityError(f"density interpolation not positive: min {bad:.3e}")
    w = np.where(f.domain.mask, -v.components / np.where(denom == 0, 1.0, denom), 0.0)
    return VectorField(domain=f.domain, components=w)


def check_density(f: ScalarField, mass_rtol=MASS_RTOL):
    """Positivity and mass compatibility gates shared by the solvers."""
    if f.fill_kind != "one":
        raise UsageError("densities must carry fill_kind='one'")
    fmin = float(f.masked().min())
    if fmin <= 0:
        raise PositivityError(f"density must be positive; min = {fmin:.3e}")
    meas = f.domain.measure()
    err = abs(integrate(f) - meas)
    if err > mass_rtol * meas:
        raise InconsistentDatumError(
            f"density mass off by {err:.3e} (> {mass_rtol:.1%} of measure {meas:.6f})"
        )
    return err


def check_unit_on_band(f: ScalarField, band, tol=1e-12, what="density"):
    dev = float(np.abs(f.values[band] - 1.0).max(initial=0.0))
    if dev > tol:
        raise InconsistentDatumError(
            f"{what} must equal 1 on the collar band; max deviation {dev:.3e}"
        )


def _flow(f, v, cfg, trajectory_log=None):
    """RK4 integration of the density-interpolation velocity from t=0 to 1.

    Space is interpolated per cfg.interp; the time dependence of the
    velocity is evaluated analytically at each substage time.
    """
    dom = f.domain
    pts = dom.coords()[:, dom.mask].T.copy()
    lo = np.array([b[0] for b in dom.bbox])
    hi = np.array([b[1] for b in dom.bbox])
    fvals = f.values
    comps = v.components

    def vel(x, t):
        V = _interp_components(comps, dom, x, cfg.interp)
        F = _interp(fvals, dom, x, cfg.interp)
        denom = t * F + (1.0 - t)
        return -V / denom[..., None]

    dt = 1.0 / cfg.time_steps
    for step in range(cfg.time_steps):
        t0 = step * dt
        k1 = vel(pts, t0)
        k2 = vel(pts + 0.5 * dt * k1, t0 + 0.5 * dt)
        k3 = vel(pts + 0.5 * dt * k2, t0 + 0.5 * dt)
        k4 = vel(pts + dt * k3, t0 + dt)
        pts = pts + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if cfg.clamp_to_domain:
            pts = np.clip(pts, lo, hi)
        if trajectory_log is not None:
            trajectory_log.append(pts.copy())
    return pts


def moser_solve(f: ScalarField, collar, cfg: FlowConfig | None = None,
                trajectory_log=None):
    """Construct a map with Jacobian determinant f by the flow method.

    Requires f > 0, total mass equal to the region measure, and f = 1 on
    the collar band.  Returns (map, report); the map's displacement
    vanishes on the band up to the divergence solver's support tolerance.
    """
    cfg = cfg or FlowConfig()
    dom = f.domain
    check_density(f)
    check_unit_on_band(f, collar.band)
    h = scalar_field(dom, f.values - 1.0, fill_kind="zero")
    if float(np.abs(h.values[dom.mask]).max()) == 0.0:
        phi = identity_map(dom, cfg.interp)
        return phi, map_report(phi, f, collar, "moser", cfg.time_steps)
    v = solve_div_collar(h, collar)
    end = _flow(f, v, cfg, trajectory_log)
    warnings = []
    sd = _interp(dom.sdist, dom, end, "bilinear")
    escape = float(sd.max(initial=-np.inf))
    if escape > 2 * dom.h_grid:
        warnings.append(
            f"trajectory escaped the mask interior by {escape:.3e} "
            f"(> 2 h_grid = {2 * dom.h_grid:.3e})"
        )
    disp = np.zeros((dom.dim,) + dom.grid_shape)
    disp[(slice(None),) + np.nonzero(dom.mask)] = (end - dom.coords()[:, dom.mask].T).T
    eta = GridMap(
        displacement=VectorField(domain=dom, components=disp), interp=cfg.interp
    )
    phi = invert(eta)
    report = map_report(phi, f, collar, "moser", cfg.time_steps, warnings)
    curvature = float(np.abs(divergence(gradient(f)).masked()).max())
    expected = max(
        1e-9, dom.h_grid**2 * (float(np.abs(h.masked()).max()) + curvature)
    )
    if report.det_residual_inf > max(10 * expected, 1e-6):
        raise FlowAccuracyError(
            f"determinant residual {report.det_residual_inf:.3e} far above "
            f"expected level {expected:.3e}"
        )
    return phi, report


def map_report(phi, f, collar, method, iterations, warnings=()):
    dom = phi.domain
    det = jacobian_det(phi)
    det_residual = float(np.abs(det.values - f.values)[dom.mask].max())
    disp_mag = phi.displacement.magnitude()
    support = float(disp_mag[collar.band].max(initial=0.0))
    mass_error = abs(integrate(det) - integrate(f))
    fm1 = scalar_field(dom, f.values - 1.0, fill_kind="zero")
    denom = holder_norm(fm1, 0, HOLDER_GAMMA).value
    if denom > 0:
        ratio = holder_norm_vector(phi.displacement, 1, HOLDER_GAMMA) / denom
    else:
        ratio = 0.0
    return SolveReport(
        method=method,
        det_residual_inf=det_residual,
        support_violation_inf=support,
        mass_error=float(mass_error),
        iterations=int(iterations),
        collar_thickness=float(collar.thickness),
        norm_ratio=float(ratio),
        warnings=list(warnings),
    )
