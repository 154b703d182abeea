"""Curvature-aware manifold learning with local Ricci flow.

The pipeline fits quadratic charts to kNN patches, flows every patch to a
common constant curvature, aligns the patches onto a sphere, and reduces
dimension under the sphere's metric. Classical baselines and evaluation
tools live alongside it.
"""
from .alignment import (
    AlignmentProblem,
    SphericalEmbedding,
    align,
    build_alignment_matrix,
    project_to_sphere,
    solve_global_coordinates,
)
from .core_geometry import (
    DimensionReport,
    LocalFrame,
    NeighborhoodGraph,
    PointCloud,
    estimate_dimension,
    knn_search,
    local_coordinates,
    local_frame,
    local_frames,
)
from .data_io import DatasetSpec, ExperimentReport, generate, load_csv, load_report, save_csv, save_report
from .embedders import (
    DistanceBackend,
    EmbeddingResult,
    embed,
    isomap_embed,
    lep_embed,
    lle_embed,
    ltsa_embed,
    pca_embed,
    rfml_embed,
    spherical_distance,
)
from .errors import (
    DisconnectedGraphError,
    FlowDivergenceError,
    InvalidDataError,
    InvalidParameterError,
    NotReducibleError,
    NumericalError,
    ParseError,
    RFMLError,
)
from .evaluation import curvature_histogram, nn_classify, npr, npr_vs_k_sweep
from .patch_model import (
    QuadraticPatch,
    curvature,
    enforce_elliptic,
    fit_patches,
    fit_quadratic,
    metric_tensor,
    second_fundamental_form,
    spherical_condition_check,
    tangent_derivatives,
)
from .ricci_flow import FlowConfig, FlowResult, FlowState, choose_target_c, flow_step, init_flow_state, run_flow

__version__ = "0.1.0"
