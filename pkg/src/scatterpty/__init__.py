"""Scatter ptychography: imaging a target through its light scattered off a
remote surface, by multi-plane phase retrieval on the scatter irradiance.

Modules
-------
field        grid containers, resampling, support windows
propagation  angular spectrum and multistage propagation
retrieval    error-reduction phase retrieval over several planes
targets      resolution charts, text masks, image targets
simulator    forward model, camera projection, shot noise, photometry
analysis     ambiguity-aware error and bar-contrast resolution
config, io   pipeline configuration and file formats
cli          command-line driver
"""

from .analysis import MetricReport, aligned_nrmse, bar_contrast, evaluate, resolved_frequency
from .field import ComplexField, GridError, RealImage, energy, nrmse, rect_window, resample_bicubic
from .propagation import PropagationPlan, asm_propagate, make_plan, masm_inverse, masm_propagate
from .retrieval import (
    NumericalFailure,
    RetrievalConfig,
    RetrievalResult,
    ScatterMeasurement,
    apply_constraints,
    initialize_estimate,
    project_data,
    run_retrieval,
)
from .simulator import (
    LAB_GEOMETRY,
    OpticsGeometry,
    PhotonBudget,
    add_poisson_noise,
    alpha_bound,
    alpha_factor,
    direct_view_ifov,
    fov_on_target,
    project_camera_to_screen,
    resolution_limit,
    screen_gsd,
    simulate_scatter_image,
)
from .targets import TargetSpec, make_target, usaf_frequency, usaf_layout

__version__ = "0.1.0"
