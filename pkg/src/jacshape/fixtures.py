"""Manufactured densities and maps for tests, samples and experiments.

All generators are deterministic; the seeded ones draw their shape
parameters from a fixed-seed generator so repeated runs are byte-identical.
"""

from __future__ import annotations

import numpy as np

from .domains import Domain
from .errors import UsageError
from .fields import VectorField, scalar_field
from .transport import GridMap


def cos_bump(t, center, halfwidth):
    """C^1 cosine-squared bump of unit height, support |t-center| < halfwidth."""
    u = np.clip((t - center) / halfwidth, -1.0, 1.0)
    return np.cos(0.5 * np.pi * u) ** 2 * (np.abs(t - center) < halfwidth)


def _balanced(positive, negative, mask):
    """positive - c * negative with c chosen so the unweighted sum over the
    mask is exactly zero (both parts must be supported inside the mask)."""
    c = positive[mask].sum() / negative[mask].sum()
    out = positive - c * negative
    return out / np.abs(out[mask]).max()


def bump_density_1d(domain: Domain, amplitude, centers=(0.4, 0.62),
                    halfwidths=(0.22, 0.2)):
    """1 + amplitude * (zero-mean dipole of cosine bumps) on an interval,
    equal to 1 outside the bump supports."""
    if domain.dim != 1:
        raise UsageError("bump_density_1d needs an interval domain")
    (a, b), = domain.bbox
    x = (domain.coords()[0] - a) / (b - a)
    s = _balanced(
        cos_bump(x, centers[0], halfwidths[0]),
        cos_bump(x, centers[1], halfwidths[1]),
        domain.mask,
    )
    return scalar_field(domain, 1.0 + amplitude * s, fill_kind="one")


def radial_dipole_density(domain: Domain, amplitude, r_core=0.35, r_ring=0.52,
                          w_ring=0.16, center=None):
    """1 + amplitude * (positive core bump minus a balancing ring), radial
    around the domain centroid; zero-mean by construction."""
    if domain.dim != 2:
        raise UsageError("radial_dipole_density needs a 2D domain")
    X, Y = domain.coords()
    if center is None:
        cx = X[domain.mask].mean()
        cy = Y[domain.mask].mean()
    else:
        cx, cy = center
    r = np.hypot(X - cx, Y - cy)
    s = _balanced(
        cos_bump(r, 0.0, r_core), cos_bump(r, r_ring, w_ring), domain.mask
    )
    return scalar_field(domain, 1.0 + amplitude * s, fill_kind="one")


def seeded_density(domain: Domain, amplitude, seed=0):
    """Randomly placed zero-mean dipole, deterministic in the seed.  The
    supports stay within 60% of the inradius of the centroid."""
    rng = np.random.default_rng(seed)
    if domain.dim == 1:
        c1 = 0.35 + 0.08 * rng.random()
        c2 = 0.6 + 0.08 * rng.random()
        w1 = 0.15 + 0.06 * rng.random()
        w2 = 0.15 + 0.06 * rng.random()
        return bump_density_1d(domain, amplitude, (c1, c2), (w1, w2))
    r_core = 0.25 + 0.12 * rng.random()
    r_ring = r_core + 0.12 + 0.08 * rng.random()
    w_ring = 0.12 + 0.05 * rng.random()
    return radial_dipole_density(domain, amplitude, r_core, r_ring, w_ring)


def radial_squeeze_map(domain: Domain, strength=0.15, r_edge=0.5,
                       interp="bilinear"):
    """Orientation-preserving radial squeeze of the disk, the identity for
    r >= r_edge (hence volume preserving near the boundary).

    r -> r * (1 - strength * cos_bump(r, 0, r_edge)) with strength small
    enough to keep d(phi r)/dr positive.
    """
    if domain.dim != 2:
        raise UsageError("radial_squeeze_map needs a 2D domain")
    if not 0 < strength < 0.3:
        raise UsageError("strength must lie in (0, 0.3)")
    X, Y = domain.coords()
    cx = X[domain.mask].mean()
    cy = Y[domain.mask].mean()
    dx, dy = X - cx, Y - cy
    r = np.hypot(dx, dy)
    factor = 1.0 - strength * cos_bump(r, 0.0, r_edge)
    comps = np.stack([dx * (factor - 1.0), dy * (factor - 1.0)])
    comps[:, ~domain.mask] = 0.0
    return GridMap(
        displacement=VectorField(domain=domain, components=comps), interp=interp
    )


def circulation_field(domain: Domain, depth):
    """Angular field (-y, x)/r^2 on the ring of nodes within `depth` of the
    boundary, zero deeper inside; 2*pi circulation around the hole.  Used
    to exercise the nonzero-period rejection."""
    X, Y = domain.coords()
    cx = X[domain.mask].mean()
    cy = Y[domain.mask].mean()
    dx, dy = X - cx, Y - cy
    r2 = np.maximum(dx**2 + dy**2, 1e-12)
    ring = domain.mask & (-domain.sdist <= depth)
    comps = np.stack([-dy / r2, dx / r2])
    comps[:, ~ring] = 0.0
    return VectorField(domain=domain, components=comps)
