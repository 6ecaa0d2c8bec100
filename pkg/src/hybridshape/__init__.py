"""Hybrid explicit/implicit shape reconstruction.

Oriented point clouds are turned into indicator grids by a differentiable
spectral Poisson solver, surfaces are extracted with marching cubes/squares,
topology defects are corrected by offset level-set extraction plus
diffeomorphic registration, and results are scored with standard surface
metrics.  Set HYBRIDSHAPE_THREADS before launching to cap BLAS/FFT threads.
"""

import os as _os

_threads = _os.environ.get("HYBRIDSHAPE_THREADS")
if _threads:
    for _var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        _os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"

from .errors import NumericalDivergenceError, TopologyCorrectionError
from .grids import (
    OrientedPointCloud,
    ScalarGrid,
    VectorGrid,
    grid_sample,
    read_hgrd,
    write_hgrd,
)
from .poisson import (
    AdjointTape,
    SpectralKernel,
    dpsr_backward,
    dpsr_forward,
    edge_weight_map,
    normalize_indicator,
    rasterize,
    solve_poisson_spectral,
    wmse_loss,
)
from .meshing import (
    Contour,
    SurfaceMesh,
    euler_characteristic,
    genus,
    is_watertight,
    largest_component,
    largest_mask_component,
    marching_cubes,
    marching_squares,
    sample_surface,
    self_intersection_ratio,
)
from .metrics import (
    NearestIndex,
    assd,
    chamfer_distance,
    hausdorff_p,
    normal_consistency,
    normal_distance,
)
from .fields import VelocityField, load_field, save_field
from .flow import FlowTrajectory, integrate, integrate_grad, invertibility_check
from .optim import Adam, AdamState, adam_step
from .registration import (
    DiffeomorphicRegistration,
    RegistrationConfig,
    register_surfaces,
)
from .topology import TopoConfig, TopologyCorrector, correct_topology, signed_distance_grid
from .hybrid import (
    DeformBaselineConfig,
    HybridConfig,
    OrientedPointOptimizer,
    deform_baseline_2d,
    make_circle,
    make_polygon_target,
    optimize_oriented_points,
    windowed_mean,
)
from .fileio import (
    load_mesh,
    read_cloud,
    read_loops,
    read_obj,
    read_ply,
    save_mesh,
    write_cloud,
    write_loops,
    write_obj,
    write_ply,
)
from . import fixtures

__all__ = [name for name in dir() if not name.startswith("_")]
