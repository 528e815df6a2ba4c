import numpy as np
import pytest

import jacshape as js
from jacshape.errors import (
    CollarError,
    DegenerateDomainError,
    ExhaustionFailureError,
)
from jacshape.io import write_pgm

from conftest import make_disk, make_interval, make_square, radial


def test_disk_area_close_to_pi(disk128):
    area = js.integrate(js.constant_field(disk128, 1.0))
    assert abs(area - np.pi) / np.pi < 0.01
    # quadrature and mask-count agree to the boundary-layer scale
    naive = disk128.mask.sum() * disk128.h_grid**2
    assert abs(area - naive) < 4 * np.pi * disk128.h_grid


def test_interval_masks_every_node():
    dom = make_interval(64)
    assert dom.dim == 1
    assert dom.mask.all()
    assert dom.boundary_components == 2


def test_square_quadrature_exact(square64):
    assert abs(js.integrate(js.constant_field(square64, 1.0)) - 1.0) < 1e-12


def test_mask_file_with_hole_counts_components(tmp_path):
    nx = ny = 64
    img = np.zeros((nx, ny))
    img[4:60, 4:60] = 255
    img[24:40, 24:40] = 0  # hole
    path = tmp_path / "holed.pgm"
    write_pgm(path, img)
    dom = js.build_domain({"shape": "mask", "path": str(path)})
    assert dom.boundary_components == 2
    assert dom.warnings  # accepted, flagged


def test_disconnected_mask_rejected(tmp_path):
    img = np.zeros((32, 32))
    img[2:12, 2:12] = 255
    img[20:30, 20:30] = 255
    path = tmp_path / "split.pgm"
    write_pgm(path, img)
    with pytest.raises(DegenerateDomainError):
        js.build_domain({"shape": "mask", "path": str(path)})


def test_underresolved_rejected():
    with pytest.raises(DegenerateDomainError):
        make_disk(8)


def test_eikonal_sanity(disk128, tmp_path):
    img = np.zeros((96, 96))
    ii, jj = np.meshgrid(np.arange(96), np.arange(96), indexing="ij")
    img[np.hypot(ii - 48, jj - 48) < 40] = 255
    path = tmp_path / "round.pgm"
    write_pgm(path, img)
    for dom in (disk128, js.build_domain({"shape": "mask", "path": str(path)})):
        g = js.gradient(js.scalar_field(dom, dom.sdist, "zero"))
        # away from the boundary and from the medial axis (the center spike
        # where every distance field is non-smooth)
        X, Y = dom.coords()
        cx = X[dom.mask].mean()
        cy = Y[dom.mask].mean()
        deep = dom.mask & (dom.sdist < -2 * dom.h_grid)
        deep &= np.hypot(X - cx, Y - cy) > 0.25 * js.inradius(dom)
        mag = g.magnitude()[deep]
        assert mag.min() > 0.9 and mag.max() < 1.1


def test_sdist_negative_exactly_on_mask(disk64):
    assert (disk64.sdist[disk64.mask] < 0).all()
    assert (disk64.sdist[~disk64.mask] >= 0).all()


def test_collar_band_is_annulus(disk128):
    col = js.collar(disk128, 0.1)
    r = radial(disk128)
    h = disk128.h_grid
    on = disk128.mask & (r >= 0.9 + h)
    off = disk128.mask & (r < 0.9 - h)
    assert col.band[on].all()
    assert not col.band[off].any()
    assert abs(col.thickness - 0.1) <= 2 * h


def test_collar_thin_band_contains_boundary_ring(disk64):
    h = disk64.h_grid
    col = js.collar(disk64, 1.5 * h)
    assert col.band.any()
    from jacshape.domains import _adjacent_to

    boundary_adjacent = disk64.mask & _adjacent_to(~disk64.mask)
    assert col.band[boundary_adjacent].all()


def test_collars_nest(disk128):
    bands = [js.collar(disk128, eps).band for eps in (0.05, 0.1, 0.2)]
    for small, big in zip(bands, bands[1:]):
        assert (big | small == big).all()
        assert big.sum() > small.sum()


def test_collar_too_thick_rejected(disk64):
    with pytest.raises(CollarError):
        js.collar(disk64, 1.5)
    with pytest.raises(CollarError):
        js.collar(disk64, 0.2 * disk64.h_grid)


@pytest.mark.parametrize(
    "dom_fn,expected,slack_cells",
    [
        (lambda: make_disk(128), 1.0, 2),
        (lambda: make_square(64), 0.5, 2),
        (lambda: make_interval(64), 0.5, 1),
    ],
)
def test_inradius(dom_fn, expected, slack_cells):
    dom = dom_fn()
    assert abs(js.inradius(dom) - expected) <= slack_cells * dom.h_grid


def test_exhaust_disk_shrinks_radius(disk128):
    sub = js.exhaust(disk128, 0.2)
    r = radial(disk128)
    h = disk128.h_grid
    assert sub.mask[disk128.mask & (r < 0.9 - 0.1 - h)].all()
    assert not sub.mask[r > 0.9 + h].any()


def test_exhaust_nesting(disk128):
    sub1 = js.exhaust(disk128, 0.1)
    sub2 = js.exhaust(disk128, 0.3)
    assert (sub1.mask | sub2.mask == sub1.mask).all()


def _hausdorff(a_pts, b_pts):
    # brute-force symmetric Hausdorff distance between two point clouds
    d = np.sqrt(((a_pts[:, None, :] - b_pts[None, :, :]) ** 2).sum(-1))
    return max(d.min(axis=1).max(), d.min(axis=0).max())


def test_exhaust_hausdorff_convergence():
    dom = make_disk(64)
    coords = np.stack(dom.coords(), axis=-1)
    boundary = dom.mask & (dom.sdist >= -1.5 * dom.h_grid)
    b_pts = coords[boundary]
    dists = []
    for d in (0.4, 0.2, 0.1):
        removed = dom.mask & ~js.exhaust(dom, d).mask
        dists.append(_hausdorff(coords[removed], b_pts))
    assert dists[0] > dists[1] > dists[2]


def test_exhaust_depth_out_of_range(disk64):
    with pytest.raises(ExhaustionFailureError):
        js.exhaust(disk64, 2.0)
    with pytest.raises(ExhaustionFailureError):
        js.exhaust(disk64, 0.0)


def test_collar_disjoint_from_exhaust_interior(disk128):
    eps, d = 0.08, 0.2
    col = js.collar(disk128, eps)
    sub = js.exhaust(disk128, d)
    assert not (col.band & sub.mask).any()


def test_exhaust_near_idempotent(disk128):
    h = disk128.h_grid
    once = js.exhaust(js.exhaust(disk128, 0.2), 0.2)
    direct = js.exhaust(disk128, 0.4)
    # nodes of the iterated subdomain lie in the direct one up to 2 cells
    slack = disk128.sdist < -(0.2 - 2 * h)
    assert (direct.mask | ~once.mask | slack).all()


def test_exhaust_gap_width(disk128):
    d = 0.3
    sub = js.exhaust(disk128, d)
    gap = disk128.mask & ~sub.mask
    depth = -disk128.sdist[gap]
    assert depth.max() >= d / 2 - 2 * disk128.h_grid
