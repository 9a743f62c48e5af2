"""Geometry and photon-budget figures for the lab configuration.

The improvement factor compares the scatter resolution limit lambda*R_ts/A_s
with the direct-view pixel footprint. The photon bound caps how large the
useful scatter region, and so the improvement, can be for a given source.

Run:  python3 demos/03_photon_budget.py
"""

from scatterpty import (
    LAB_GEOMETRY as g,
    PhotonBudget,
    alpha_bound,
    alpha_factor,
    direct_view_ifov,
    fov_on_target,
    resolution_limit,
    screen_gsd,
)
from scatterpty.simulator import photon_rate, scatter_extent_bound_diffraction

print(f"improvement factor   : {alpha_factor(g):.1f}")
print(f"resolution limit     : {resolution_limit(g) * 1e6:.1f} um")
print(f"direct-view ifov     : {direct_view_ifov(g) * 1e3:.3f} mm")
print(f"screen sample dist.  : {screen_gsd(g) * 1e6:.1f} um")
print(f"fov on target        : {fov_on_target(g) * g.range_target_scatter * 1e3:.1f} mm")

# 1 kW at 532 nm for 100 ms, 10% scattered, 10 photons needed per pixel
L = photon_rate(1e3, g.wavelength)
b = PhotonBudget(scatter_fraction=0.1, exposure_time=0.1, source_power=L, min_detectable_photons=10)
print(f"\nsource              : {L:.3e} photons/s ({L * b.exposure_time:.3e} per exposure)")
print(f"flux ratio          : {b.flux_ratio:.3e}")
print(f"improvement bound   : {alpha_bound(g, b):.3e}")
print(f"scatter extent bound: {scatter_extent_bound_diffraction(g, b):.3e} m")

# at 1 kW the photon bound sits far above the geometric factor, so the surface
# size, not the flux, limits the improvement; the bound scales as sqrt(flux)
for scale in (1e-2, 1e-4, 1e-6):
    weak = PhotonBudget(0.1, 0.1, L * scale, 10)
    print(f"  source x {scale:g}: bound {alpha_bound(g, weak):.3e}")
