import numpy as np
import pytest

import jacshape as js
from jacshape.errors import (
    DegenerateRegionError,
    KernelUnderresolvedError,
    UnsupportedOrderError,
    UsageError,
)
from jacshape.fields import (
    cumulative_integral,
    inner_product,
    total_integral_1d,
    vector_gradient,
)
from jacshape.transport import GridMap

from conftest import make_disk, make_interval, make_square, radial


# ---------------------------------------------------------------------------
# derivatives
# ---------------------------------------------------------------------------


def test_gradient_of_constant_is_zero(disk64):
    g = js.gradient(js.constant_field(disk64, 3.7))
    assert np.abs(g.components[:, disk64.mask]).max() < 1e-12


def test_gradient_exact_on_linear(square64):
    f = js.sample_field(square64, lambda x, y: x)
    g = js.gradient(f)
    assert np.abs(g.components[0][square64.mask] - 1.0).max() < 1e-12
    assert np.abs(g.components[1][square64.mask]).max() < 1e-12


def test_gradient_second_order():
    errs = []
    for res in (64, 128):
        dom = make_square(res)
        f = js.sample_field(dom, lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
        g = js.gradient(f)
        X, Y = dom.coords()
        exact = np.pi * np.cos(np.pi * X) * np.sin(np.pi * Y)
        errs.append(np.abs(g.components[0] - exact)[dom.mask].max())
    assert errs[0] / errs[1] > 3.0


def test_divergence_of_constant_field(disk64):
    u = js.vector_field(
        disk64, np.stack([np.full(disk64.grid_shape, 1.0),
                          np.full(disk64.grid_shape, -2.0)])
    )
    dv = js.divergence(u)
    assert np.abs(dv.values[disk64.interior_mask(1)]).max() == 0.0


def test_divergence_of_radial_identity(square64):
    u = js.vector_field(square64, np.stack(square64.coords()))
    dv = js.divergence(u)
    assert np.abs(dv.values[square64.mask] - 2.0).max() < 1e-10


def test_divergence_of_rotated_gradient():
    # tensor-product domain: per-axis stencils commute, so the divergence of
    # a rotated gradient is zero to roundoff everywhere (within the O(h^2)
    # contract with constant 0)
    dom = make_square(128)
    gamma = js.sample_field(dom, lambda x, y: np.exp(x) * np.cos(y))
    err = np.abs(js.divergence(js.rotated_gradient(gamma)).values[dom.mask]).max()
    assert err <= dom.h_grid**2
    # curved mask: interior stays machine-zero; the rim rows, where stencil
    # types mix, still converge under refinement
    errs = []
    for res in (64, 128):
        d = make_disk(res)
        g = js.sample_field(d, lambda x, y: np.exp(x) * np.cos(y))
        dv = js.divergence(js.rotated_gradient(g))
        assert np.abs(dv.values[d.interior_mask(2)]).max() < 1e-10
        errs.append(np.abs(dv.values[d.mask]).max())
    assert errs[0] / errs[1] > 1.8


def test_rotated_gradient_divergence_free_to_machine(disk64):
    rng = np.random.default_rng(3)
    gamma = js.scalar_field(disk64, rng.standard_normal(disk64.grid_shape))
    u = js.rotated_gradient(gamma)
    dv = js.divergence(u)
    full = disk64.interior_mask(2)
    assert np.abs(dv.values[full]).max() < 1e-11 / disk64.h_grid**2 * 1e-4


def test_adjointness_of_gradient_and_divergence(disk64):
    rng = np.random.default_rng(7)
    cutoff = disk64.interior_mask(3)
    p_vals = np.where(cutoff, rng.standard_normal(disk64.grid_shape), 0.0)
    u_vals = np.where(cutoff, rng.standard_normal((2,) + disk64.grid_shape), 0.0)
    p = js.scalar_field(disk64, p_vals)
    u = js.vector_field(disk64, u_vals)
    lhs = inner_product(js.gradient(p), u) + inner_product(p, js.divergence(u))
    n = disk64.mask.sum()
    bound = (
        10 * np.finfo(float).eps * n
        * np.linalg.norm(p_vals) * np.linalg.norm(u_vals)
    )
    assert abs(lhs) <= bound


# ---------------------------------------------------------------------------
# Jacobian determinants
# ---------------------------------------------------------------------------


def test_jacobian_det_identity(disk64):
    det = js.jacobian_det(js.identity_map(disk64))
    assert np.array_equal(det.values, np.ones(disk64.grid_shape))


def test_jacobian_det_volume_preserving_linear(square64):
    X, Y = square64.coords()
    disp = np.stack([X, -Y / 2])  # (2x, y/2)
    phi = GridMap(displacement=js.vector_field(square64, disp))
    det = js.jacobian_det(phi)
    assert np.abs(det.values[square64.mask] - 1.0).max() < 1e-12


def test_jacobian_det_second_order():
    errs = []
    for res in (64, 128):
        dom = make_square(res)
        X, Y = dom.coords()
        disp = np.stack([0.1 * np.sin(np.pi * X) * np.sin(np.pi * Y),
                         np.zeros_like(X)])
        phi = GridMap(displacement=js.vector_field(dom, disp))
        det = js.jacobian_det(phi)
        exact = 1.0 + 0.1 * np.pi * np.cos(np.pi * X) * np.sin(np.pi * Y)
        errs.append(np.abs(det.values - exact)[dom.mask].max())
    assert errs[0] / errs[1] > 3.0


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------


def test_integrate_disk_area():
    dom = make_disk(256)  # h = 1/128
    val = js.integrate(js.constant_field(dom, 1.0))
    assert abs(val - np.pi) / np.pi < 2e-3


def test_integrate_zero(disk64):
    assert js.integrate(js.scalar_field(disk64, np.zeros(disk64.grid_shape))) == 0.0


def test_integrate_square_exact(square128):
    assert abs(js.integrate(js.constant_field(square128, 1.0)) - 1.0) < 1e-12


def test_cumulative_integral_against_polynomial_oracle():
    dom = make_interval(128)
    x = dom.coords()[0]
    g = 2.0 - 3.0 * x + x**2 + 0.5 * x**3
    exact = 2.0 * x - 1.5 * x**2 + x**3 / 3 + x**4 / 8  # antiderivative at nodes
    got = cumulative_integral(g, dom.h_grid)
    assert np.abs(got - exact).max() < 1e-13
    assert abs(total_integral_1d(g, dom.h_grid) - (2 - 1.5 + 1 / 3 + 1 / 8)) < 1e-13


def test_cumulative_integral_fourth_order():
    errs = []
    for res in (128, 256):
        dom = make_interval(res)
        x = dom.coords()[0]
        got = cumulative_integral(np.sin(3 * x), dom.h_grid)
        exact = (1 - np.cos(3 * x)) / 3
        errs.append(np.abs(got - exact).max())
    assert errs[0] / errs[1] > 12.0


# ---------------------------------------------------------------------------
# Hölder norms
# ---------------------------------------------------------------------------


def test_seminorm_of_constant(disk64):
    assert js.holder_seminorm(js.constant_field(disk64, 4.0), 0.5) == 0.0


def test_seminorm_identity_lipschitz():
    dom = make_interval(128)
    f = js.scalar_field(dom, dom.coords()[0])
    assert abs(js.holder_seminorm(f, 1.0) - 1.0) < 1e-12


def test_seminorm_sqrt_approaches_one_from_below():
    vals = []
    for res in (128, 256):
        dom = make_interval(res)
        f = js.scalar_field(dom, np.sqrt(dom.coords()[0]))
        vals.append(js.holder_seminorm(f, 0.5))
    assert vals[0] < vals[1] < 1.0


def test_seminorm_region_too_small(disk64):
    region = np.zeros(disk64.grid_shape, dtype=bool)
    region[32, 32] = True
    with pytest.raises(DegenerateRegionError):
        js.holder_seminorm(js.constant_field(disk64, 1.0), 0.5, region=region)


def test_holder_norm_of_constant(disk64):
    for r in (0, 1):
        est = js.holder_norm(js.constant_field(disk64, 1.0), r, 0.5)
        assert est.value == 1.0


def test_holder_norm_small_perturbation(square64):
    f = js.sample_field(
        square64,
        lambda x, y: 1.0 + 0.01 * np.sin(np.pi * x) * np.sin(np.pi * y),
    )
    est = js.holder_norm(f, 0, 0.5, pair_budget=10_000_000)  # exhaustive
    assert 1.01 < est.value < 1.01 + 0.01 * np.pi * np.sqrt(2) + 0.02


def test_holder_norm_subsample_below_exhaustive(square64):
    rng = np.random.default_rng(11)
    f = js.scalar_field(square64, rng.standard_normal(square64.grid_shape))
    full = js.holder_norm(f, 0, 0.5, pair_budget=10_000_000)
    sub = js.holder_norm(f, 0, 0.5, pair_budget=20_000)
    assert sub.value <= full.value
    assert sub.pair_budget < full.pair_budget


def test_holder_norm_rejects_high_order(disk64):
    with pytest.raises(UnsupportedOrderError):
        js.holder_norm(js.constant_field(disk64, 1.0), 2, 0.5)


# ---------------------------------------------------------------------------
# mollification
# ---------------------------------------------------------------------------


def test_mollify_preserves_ones(disk64):
    out = js.mollify(js.constant_field(disk64, 1.0), 0.1)
    assert np.abs(out.values - 1.0).max() < 1e-14


def test_mollify_keeps_boundary_ring_at_one(disk128):
    r = radial(disk128)
    vals = np.where(r < 0.4, 1.0 + 0.5 * np.cos(np.pi * r / 0.4) ** 2, 1.0)
    f = js.scalar_field(disk128, vals, "one")
    radius = 0.1  # support at distance 0.6 > 3 * radius from the boundary
    out = js.mollify(f, radius)
    near = disk128.mask & (disk128.sdist >= -radius)
    assert np.abs(out.values[near] - 1.0).max() < 1e-14


def test_mollify_converges_to_f(disk128):
    f = js.sample_field(
        disk128, lambda x, y: 1.0 + 0.3 * np.exp(-4 * (x**2 + y**2)), "one"
    )
    errs = [
        np.abs(js.mollify(f, r).values - f.values)[disk128.mask].max()
        for r in (0.2, 0.1, 0.05)
    ]
    assert errs[0] > errs[1] > errs[2]


def test_mollify_min_bound(disk128):
    f = js.scalar_field(
        disk128, 1.0 - 0.4 * np.exp(-8 * radial(disk128) ** 2), "one"
    )
    out = js.mollify(f, 0.08)
    assert out.values.min() >= f.values.min() - 1e-14


def test_mollify_mass_preservation(disk128):
    r = radial(disk128)
    vals = np.where(r < 0.4, 1.0 + 0.5 * np.cos(np.pi * r / 0.4) ** 2, 1.0)
    f = js.scalar_field(disk128, vals, "one")
    out = js.mollify(f, 0.1)
    assert abs(js.integrate(out) - js.integrate(f)) < 1e-10


def test_mollify_needs_density_fill(disk64):
    with pytest.raises(UsageError):
        js.mollify(js.constant_field(disk64, 1.0, fill_kind="zero"), 0.1)


def test_mollify_underresolved_radius(disk64):
    with pytest.raises(KernelUnderresolvedError):
        js.mollify(js.constant_field(disk64, 1.0), 1.5 * disk64.h_grid)
