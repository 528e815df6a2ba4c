"""Prescribed-Jacobian-determinant solvers.

Routes, from most restrictive to most general:

* ``solve_1d``          -- closed-form cumulative quadrature on an interval.
* ``fixedpoint_solve``  -- contraction iteration for densities close to 1,
  writing the determinant equation as div v = f - 1 - Q(grad v) with Q the
  nonlinear remainder of the determinant beyond its linearization.
* ``solve_supported``   -- f = 1 near the collar: mollify, fix the mass with
  a bump family chosen by the intermediate value theorem, solve the small
  part by fixed point and the smooth remainder by the flow method, compose.
* ``solve_general``     -- supp(f-1) at distance >= d from the boundary:
  exhaust the domain, solve on the subdomain, extend by the identity.
* ``volume_correct``    -- compose a given map with a solve so the result is
  volume preserving, unchanged near the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .domains import CollarSpec, Domain, collar as make_collar, exhaust, inradius
from .errors import (
    BracketFailureError,
    ChangeOfVariablesDriftError,
    ContractionFailureError,
    InconsistentDatumError,
    InconsistentMapError,
    KernelUnderresolvedError,
    OrientationLossError,
    PositivityError,
    ShapeMismatchError,
    SupportDistanceError,
    UsageError,
)
from .fields import (
    ScalarField,
    VectorField,
    cumulative_integral,
    holder_norm,
    integrate,
    jacobian_det,
    mollify,
    scalar_field,
    total_integral_1d,
    vector_gradient,
    zero_vector_field,
)
from .divsolve import solve_div_collar
from .report import SolveReport
from .transport import (
    FlowConfig,
    GridMap,
    MASS_RTOL,
    check_density,
    check_unit_on_band,
    compose,
    identity_map,
    interpolate_scalar,
    invert,
    map_report,
    moser_solve,
)

SUPPORT_ATOL = 1e-12


@dataclass(frozen=True)
class FixedPointConfig:
    """Knobs of the contraction iteration.  `gamma` is the Hölder exponent
    of the smallness gate; `epsilon_threshold` the gate value (the continuum
    theory's threshold is nonconstructive, so it is configuration here)."""

    gamma: float = 0.5
    epsilon_threshold: float = 0.05
    max_iter: int = 30
    contraction_tol: float = 1e-9

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise UsageError("gamma must lie in (0, 1)")
        if self.epsilon_threshold <= 0:
            raise UsageError("epsilon_threshold must be positive")


@dataclass(frozen=True, eq=False)
class MeasureCorrection:
    """Mollified density with its mass fixed by a bump family 1 + t*H.

    F = (1 + t_hat*H) * f / f_tilde has exactly the region's measure as
    total mass, equals 1 on the working band, and is positive.
    """

    f_tilde: ScalarField
    bump_H: ScalarField
    t_hat: float
    t_hat_bisect: float
    F: ScalarField
    mass_error: float
    working_band: np.ndarray


def support_depth(f: ScalarField, atol=SUPPORT_ATOL):
    """Distance from supp(f-1) to the boundary; inradius when empty."""
    dom = f.domain
    supp = dom.mask & (np.abs(f.values - 1.0) > atol)
    if not supp.any():
        return inradius(dom)
    return float(-dom.sdist[supp].max())


# ---------------------------------------------------------------------------
# 1D closed form
# ---------------------------------------------------------------------------


def solve_1d(f: ScalarField) -> GridMap:
    """Closed-form solution on an interval: the cumulative quadrature of f,
    rescaled so the endpoints are fixed exactly.

    Where f equals 1 on an end band the solution is the identity there
    node-wise (the quadrature weights away from the ends are uniform, so an
    exactly mass-balanced f contributes nothing before its support).
    """
    dom = f.domain
    if dom.dim != 1:
        raise ShapeMismatchError("solve_1d needs an interval domain")
    check_density(f)
    (a, b), = dom.bbox
    cum = cumulative_integral(f.values, dom.h_grid)
    total = total_integral_1d(f.values, dom.h_grid)
    phi = a + cum * ((b - a) / total)
    if not (np.diff(phi) > 0).all():
        raise PositivityError("solution is not strictly increasing")
    disp = (phi - dom.coords()[0])[None, :]
    return GridMap(displacement=VectorField(domain=dom, components=disp))


# ---------------------------------------------------------------------------
# fixed-point contraction
# ---------------------------------------------------------------------------


def q_residual(grad_v, domain: Domain) -> ScalarField:
    """Nonlinear remainder det(I + xi) - 1 - trace(xi) of the determinant:
    identically 0 in 1D, det(xi) in 2D."""
    if domain.dim == 1:
        vals = np.zeros(domain.grid_shape)
    else:
        vals = grad_v[0, 0] * grad_v[1, 1] - grad_v[0, 1] * grad_v[1, 0]
    return scalar_field(domain, vals, fill_kind="zero")


def _c1_norm(u: VectorField):
    dom = u.domain
    sup = float(np.abs(u.components[:, dom.mask]).max(initial=0.0))
    jac = vector_gradient(u)
    sup_d = float(np.abs(jac[(slice(None), slice(None)) + np.nonzero(dom.mask)]).max(initial=0.0))
    return max(sup, sup_d)


def _project_zero_mean_offband(vals, mask, band):
    """Shift values on mask-minus-band by a constant so the unweighted sum
    over the mask is exactly zero, keeping the band untouched (zero)."""
    interior = mask & ~band
    n = int(interior.sum())
    if n:
        vals[interior] -= vals[mask].sum() / n
    return vals


def fixedpoint_solve(
    f: ScalarField,
    collar: CollarSpec,
    cfg: FixedPointConfig | None = None,
    flow_cfg: FlowConfig | None = None,
    history=None,
):
    """Contraction iteration v <- L^{-1}(f - 1 - Q(grad v)) with L^{-1} the
    collar-supported divergence solve; returns (id + v, report).

    Every iterate vanishes on the band (the right-hand side is clamped to
    exactly zero there, and mean-projected off the band).  Raises a
    contraction failure when the smallness gate rejects f or the iterates
    stop contracting; callers may then route to the mollified pipeline.
    """
    cfg = cfg or FixedPointConfig()
    interp = (flow_cfg or FlowConfig()).interp
    dom = f.domain
    check_density(f)
    check_unit_on_band(f, collar.band)
    fm1 = scalar_field(dom, f.values - 1.0, fill_kind="zero")
    gate = holder_norm(fm1, 0, cfg.gamma).value
    if gate > cfg.epsilon_threshold:
        raise ContractionFailureError(
            f"smallness gate failed: |f-1| in C^(0,{cfg.gamma}) is {gate:.4f} "
            f"> threshold {cfg.epsilon_threshold}; use the mollified pipeline"
        )
    v = zero_vector_field(dom)
    first_norm = None
    diffs = []
    for m in range(1, cfg.max_iter + 1):
        q = q_residual(vector_gradient(v), dom)
        rhs = (f.values - 1.0) - q.values
        rhs[collar.band] = 0.0
        rhs[~dom.mask] = 0.0
        rhs = _project_zero_mean_offband(rhs, dom.mask, collar.band)
        v_new = solve_div_collar(scalar_field(dom, rhs, "zero"), collar)
        delta = VectorField(
            domain=dom, components=v_new.components - v.components
        )
        diff = _c1_norm(delta)
        diffs.append(diff)
        v = v_new
        norm = _c1_norm(v)
        if first_norm is None:
            first_norm = norm
        if norm > 10.0 * max(first_norm, 1e-300):
            raise ContractionFailureError(
                f"iterates growing: |v_{m}| = {norm:.3e} vs initial {first_norm:.3e}"
            )
        if diff <= cfg.contraction_tol:
            break
    else:
        raise ContractionFailureError(
            f"no contraction after {cfg.max_iter} iterations "
            f"(last difference {diffs[-1]:.3e})"
        )
    if history is not None:
        history["diffs"] = diffs
    phi = GridMap(displacement=v, interp=interp)
    report = map_report(phi, f, collar, "fixedpoint", m)
    return phi, report


# ---------------------------------------------------------------------------
# measure correction and the mollified pipeline
# ---------------------------------------------------------------------------


def bump_plateau(domain: Domain, width):
    """Squared-cosine ramp of the distance function: 0 where
    sdist >= -width, 1 where sdist <= -2*width, smooth between."""
    t = np.clip((-domain.sdist - width) / width, 0.0, 1.0)
    vals = 0.5 * (1.0 - np.cos(np.pi * t))
    vals[~domain.mask] = 0.0
    return scalar_field(domain, vals, fill_kind="zero")


def measure_correct(
    f: ScalarField, collar: CollarSpec, mollify_radius, bump_eta=0.05
) -> MeasureCorrection:
    """Mollify f and repair its total mass with the bump family 1 + t*H.

    The mass functional m(t) is affine in t, so t is found by one linear
    solve; a bisection of the same bracket is kept as a cross-check.
    """
    dom = f.domain
    radius = float(mollify_radius)
    eps = collar.epsilon
    guard = dom.mask & (dom.sdist >= -(eps + 3.0 * radius))
    dev = float(np.abs(f.values[guard] - 1.0).max(initial=0.0))
    if dev > SUPPORT_ATOL:
        raise InconsistentDatumError(
            "density must equal 1 on the collar band and within three "
            f"mollification radii of its inner boundary (max deviation {dev:.3e})"
        )
    f_tilde = mollify(f, radius)
    eps2 = eps + radius
    working = dom.mask & (dom.sdist >= -eps2)
    dev = float(np.abs(f_tilde.values[working] - 1.0).max(initial=0.0))
    if dev > 1e-12:
        raise InconsistentDatumError(
            f"mollified density is not 1 on the working band ({dev:.3e}); "
            "mollification radius too large for the declared margin"
        )
    if bump_eta <= 0 or bump_eta >= 1:
        raise UsageError("bump_eta must lie in (0, 1)")
    H = bump_plateau(dom, eps2)
    H = scalar_field(dom, bump_eta * H.values, fill_kind="zero")
    base = f.values / f_tilde.values
    w = dom.quad_weights()
    meas = dom.measure()
    m0 = float((base * w).sum())
    m1 = float((base * H.values * w).sum())
    if not (m0 - m1 < meas < m0 + m1):
        raise BracketFailureError(
            f"mass bracket failed: m(-1)={m0 - m1:.8f}, m(1)={m0 + m1:.8f}, "
            f"measure={meas:.8f}; increase bump_eta or shrink mollify_radius",
            m_minus=m0 - m1,
            m_plus=m0 + m1,
        )
    t_hat = (meas - m0) / m1
    lo, hi = -1.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if abs(m0 + mid * m1 - meas) <= 1e-12 * meas:
            break
        if m0 + mid * m1 < meas:
            lo = mid
        else:
            hi = mid
    t_bisect = mid
    F_vals = (1.0 + t_hat * H.values) * base
    F = scalar_field(dom, F_vals, fill_kind="one")
    fmin = float(F.masked().min())
    if fmin <= 0:
        raise PositivityError(f"corrected density not positive (min {fmin:.3e})")
    mass_error = abs(integrate(F) - meas)
    return MeasureCorrection(
        f_tilde=f_tilde,
        bump_H=H,
        t_hat=float(t_hat),
        t_hat_bisect=float(t_bisect),
        F=F,
        mass_error=float(mass_error),
        working_band=working,
    )


def _auto_radius(f, collar):
    dom = f.domain
    d_supp = support_depth(f)
    room = (d_supp - collar.epsilon) / 3.0
    radius = min(0.999 * room, inradius(dom) / 4.0)
    if radius < 2 * dom.h_grid:
        raise KernelUnderresolvedError(
            f"no room for a resolvable mollifier: margin/3 = {room:.4f}, "
            f"need >= {2 * dom.h_grid:.4f}; refine the grid or thin the collar"
        )
    return radius


def solve_supported(
    f: ScalarField,
    collar: CollarSpec,
    cfg: FixedPointConfig | None = None,
    flow_cfg: FlowConfig | None = None,
    mollify_radius=None,
    bump_eta=0.05,
):
    """Full pipeline for f = 1 on a band strictly wider than the collar:
    measure-corrected fixed point for the rough part, flow method for the
    mollified remainder, composed.  Returns (map, report)."""
    cfg = cfg or FixedPointConfig()
    flow_cfg = flow_cfg or FlowConfig()
    dom = f.domain
    check_density(f)
    check_unit_on_band(f, collar.band)
    if float(np.abs(f.values[dom.mask] - 1.0).max()) <= SUPPORT_ATOL:
        phi = identity_map(dom, flow_cfg.interp)
        return phi, map_report(phi, f, collar, "full", 0)
    if mollify_radius is None:
        mollify_radius = _auto_radius(f, collar)
    mc = measure_correct(f, collar, mollify_radius, bump_eta)
    # F - 1 is small by construction, but its size is set by the grid-bound
    # mollification radius rather than a free parameter, so the pipeline
    # runs its internal gate no tighter than the contraction can tolerate
    inner_cfg = replace(
        cfg, epsilon_threshold=max(cfg.epsilon_threshold, 0.35)
    )
    phi1, rep1 = fixedpoint_solve(mc.F, collar, inner_cfg, flow_cfg)
    phi1_inv = invert(phi1)
    g_base = scalar_field(
        dom, mc.f_tilde.values / (1.0 + mc.t_hat * mc.bump_H.values), "one"
    )
    pulled = interpolate_scalar(
        g_base, np.moveaxis(phi1_inv.node_positions(), 0, -1), flow_cfg.interp
    )
    pulled[collar.band] = 1.0
    G = scalar_field(dom, pulled, fill_kind="one")
    meas = dom.measure()
    g_mass_err = abs(integrate(G) - meas)
    if g_mass_err > 0.02 * meas:
        raise ChangeOfVariablesDriftError(
            f"pulled-back density lost {g_mass_err:.3e} mass "
            f"(> 2% of {meas:.6f}); grid too coarse"
        )
    phi2, rep2 = moser_solve(G, collar, replace(flow_cfg, clamp_to_domain=True))
    phi = compose(phi2, phi1)
    report = map_report(
        phi, f, collar, "full", rep1.iterations + rep2.iterations,
        rep1.warnings + rep2.warnings,
    )
    return phi, report


# ---------------------------------------------------------------------------
# general domains: exhaustion and identity extension
# ---------------------------------------------------------------------------


def identity_region(domain: Domain, d):
    """Node set V_d where every solve with supp(f-1) at distance >= d is the
    identity: the vacated ring of the exhaustion plus the subdomain collar.
    Depends only on (domain, d)."""
    sub = exhaust(domain, d)
    col = make_collar(sub, d / 8.0)
    return domain.mask & (~sub.mask | col.band)


def solve_general(
    f: ScalarField,
    d,
    cfg: FixedPointConfig | None = None,
    flow_cfg: FlowConfig | None = None,
    bump_eta=0.05,
):
    """Solve det grad(phi) = f for supp(f-1) at distance >= d from the
    boundary: restrict to the exhausted subdomain (collar d/8, mollifier
    d/8, support margin 3d/8), solve there, extend by the identity."""
    d = float(d)
    dom = f.domain
    flow_cfg = flow_cfg or FlowConfig()
    check_density(f)
    rin = inradius(dom)
    if not 0 < d <= rin:
        raise UsageError(f"distance d={d} outside (0, inradius={rin:.4f}]")
    if float(np.abs(f.values[dom.mask] - 1.0).max()) <= SUPPORT_ATOL:
        phi = identity_map(dom, flow_cfg.interp)
        col = make_collar(exhaust(dom, d), d / 8.0) if d < rin else None
        thickness = col.thickness if col else 0.0
        rep = SolveReport(
            method="general",
            det_residual_inf=0.0,
            support_violation_inf=0.0,
            mass_error=abs(integrate(jacobian_det(phi)) - integrate(f)),
            iterations=0,
            collar_thickness=thickness,
            norm_ratio=0.0,
        )
        return phi, rep
    offending = dom.mask & (np.abs(f.values - 1.0) > SUPPORT_ATOL) & (
        dom.sdist > -d
    )
    if offending.any():
        nodes = [tuple(map(int, n)) for n in np.argwhere(offending)[:32]]
        raise SupportDistanceError(
            f"supp(f-1) closer than d={d} to the boundary at "
            f"{int(offending.sum())} nodes",
            offending_nodes=nodes,
        )
    if d / 8.0 < 2 * dom.h_grid:
        raise KernelUnderresolvedError(
            f"d={d} needs d/8 >= 2 h_grid, i.e. d >= {16 * dom.h_grid:.4f} "
            "at this resolution"
        )
    sub = exhaust(dom, d)
    col = make_collar(sub, d / 8.0)
    f_sub = scalar_field(sub, f.values, fill_kind="one")
    meas_sub = sub.measure()
    restriction_err = abs(integrate(f_sub) - meas_sub)
    if restriction_err > MASS_RTOL * meas_sub:
        raise InconsistentDatumError(
            f"mass restriction identity violated by {restriction_err:.3e} "
            f"on the subdomain (measure {meas_sub:.6f})"
        )
    phi_sub, rep = solve_supported(
        f_sub, col, cfg, flow_cfg, mollify_radius=d / 8.0, bump_eta=bump_eta
    )
    # extension by the identity: same grid, displacement already 0 off the
    # subdomain mask
    disp = VectorField(domain=dom, components=phi_sub.displacement.components)
    phi = GridMap(displacement=disp, interp=phi_sub.interp)
    det = jacobian_det(phi)
    det_res = float(np.abs(det.values - f.values)[dom.mask].max())
    vd = identity_region(dom, d)
    support = float(phi.displacement.magnitude()[vd].max(initial=0.0))
    report = SolveReport(
        method="general",
        det_residual_inf=det_res,
        support_violation_inf=support,
        mass_error=abs(integrate(det) - integrate(f)),
        iterations=rep.iterations,
        collar_thickness=col.thickness,
        norm_ratio=rep.norm_ratio,
        warnings=list(rep.warnings),
    )
    return phi, report


def volume_correct(
    psi: GridMap,
    d,
    cfg: FixedPointConfig | None = None,
    flow_cfg: FlowConfig | None = None,
    det_tol=None,
):
    """Compose psi with a prescribed-determinant solve so the result is
    volume preserving while equal to psi on the identity region V_d.

    psi must map the region into itself and be volume preserving at
    distance < d from the boundary."""
    d = float(d)
    dom = psi.domain
    flow_cfg = flow_cfg or FlowConfig()
    det_psi = jacobian_det(psi)
    if det_psi.masked().min() <= 0:
        raise OrientationLossError("psi must preserve orientation")
    if det_tol is None:
        det_tol = max(1e-10, 50.0 * dom.h_grid**2)
    near = dom.mask & (dom.sdist > -d)
    dev = float(np.abs(det_psi.values[near] - 1.0).max(initial=0.0))
    if dev > det_tol:
        raise InconsistentMapError(
            f"psi is not volume preserving near the boundary: |det-1| = "
            f"{dev:.3e} > {det_tol:.3e} at distance < {d}"
        )
    from .transport import _interp  # sdist sampling at mapped points

    sd_at = _interp(dom.sdist, dom, np.moveaxis(psi.node_positions(), 0, -1),
                    "bilinear")
    drift = float(sd_at[dom.mask].max(initial=-np.inf))
    if drift > 2 * dom.h_grid:
        raise InconsistentMapError(
            f"psi leaves the region (signed distance {drift:.3e} at mapped nodes)"
        )
    psi_inv = invert(psi)
    f_vals = jacobian_det(psi_inv).values.copy()
    f_vals[near] = 1.0
    f = scalar_field(dom, f_vals, fill_kind="one")
    meas = dom.measure()
    mass_err = abs(integrate(f) - meas)
    if mass_err > MASS_RTOL * meas:
        raise InconsistentMapError(
            f"det grad(psi^-1) has mass error {mass_err:.3e}; psi is not "
            "consistent with a volume correction on this grid"
        )
    phi, rep = solve_general(f, d, cfg, flow_cfg)
    corrected = compose(phi, psi)
    det = jacobian_det(corrected)
    det_res = float(np.abs(det.values - 1.0)[dom.mask].max())
    vd = identity_region(dom, d)
    delta = corrected.displacement.components - psi.displacement.components
    support = float(np.sqrt((delta**2).sum(axis=0))[vd].max(initial=0.0))
    report = SolveReport(
        method="general",
        det_residual_inf=det_res,
        support_violation_inf=support,
        mass_error=abs(integrate(det) - meas),
        iterations=rep.iterations,
        collar_thickness=rep.collar_thickness,
        norm_ratio=rep.norm_ratio,
        warnings=list(rep.warnings),
    )
    return corrected, report


# ---------------------------------------------------------------------------
# routing
# ---------------------------------------------------------------------------


def solve(
    f: ScalarField,
    method="auto",
    distance=None,
    collar_epsilon=0.15,
    cfg: FixedPointConfig | None = None,
    flow_cfg: FlowConfig | None = None,
    bump_eta=0.05,
    mollify_radius=None,
):
    """Route a density to the right solver.

    ``auto`` infers the support distance and runs the general path; an
    explicit method runs that path with `collar_epsilon`.  On an interval
    domain ``oned`` selects the closed form."""
    dom = f.domain
    flow_cfg = flow_cfg or FlowConfig()
    if method == "oned":
        if dom.dim != 1:
            raise UsageError("method 'oned' needs an interval domain")
        phi = solve_1d(f)
        eps = min(collar_epsilon, 0.5 * inradius(dom))
        col = make_collar(dom, max(dom.h_grid, eps))
        return phi, map_report(phi, f, col, "oned", 1)
    if method == "general":
        d = float(distance) if distance is not None else support_depth(f)
        return solve_general(f, d, cfg, flow_cfg, bump_eta=bump_eta)
    if method == "auto":
        if distance is not None:
            return solve_general(f, float(distance), cfg, flow_cfg,
                                 bump_eta=bump_eta)
        d = support_depth(f)
        if d / 8.0 >= 2 * dom.h_grid:
            return solve_general(f, d, cfg, flow_cfg, bump_eta=bump_eta)
        # support too close for the exhaustion margins at this grid: run the
        # mollified pipeline (or plain contraction) on a collar that fits
        eps = max(dom.h_grid, d / 5.0)
        if 0.999 * (d - eps) / 3.0 >= 2 * dom.h_grid:
            col = make_collar(dom, eps)
            return solve_supported(f, col, cfg, flow_cfg, bump_eta=bump_eta)
        col = make_collar(dom, max(dom.h_grid, 0.45 * d))
        return fixedpoint_solve(f, col, cfg, flow_cfg)
    col = make_collar(dom, collar_epsilon)
    if method == "moser":
        return moser_solve(f, col, flow_cfg)
    if method == "fixedpoint":
        return fixedpoint_solve(f, col, cfg, flow_cfg)
    if method == "full":
        return solve_supported(
            f, col, cfg, flow_cfg, mollify_radius=mollify_radius,
            bump_eta=bump_eta,
        )
    raise UsageError(f"unknown method {method!r}")
