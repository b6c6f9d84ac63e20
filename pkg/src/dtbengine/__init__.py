"""Exploration engine for paired biological / digital-twin brain recordings.

Subpackages by concern: ``atlas`` (region/voxel hierarchy), ``signals``
(BOLD series analytics and color encodings), ``connectome`` (DTI edge
weights, normalization, rank thresholds), ``fdeb`` (3D force-directed
edge bundling), ``slicer`` (anatomical sections), ``synthgen``
(deterministic fixtures), ``scene`` + ``server`` (session-scoped scene
payloads over HTTP), ``cli`` (command-line front door).
"""

from .atlas import (
    Atlas,
    Region,
    Voxel,
    aal116_table,
    functional_regions,
    load_atlas,
    make_atlas,
    region_by_label,
    region_sphere_radius,
    save_atlas,
)
from .connectome import (
    ConnectivityMatrix,
    Edge,
    EdgeSet,
    RegionAdjacency,
    direction_gradient,
    edges_from_regions,
    global_normalize,
    load_dti,
    make_matrix,
    region_adjacency,
    save_dti,
    symmetrized,
    threshold_filter,
    top_fraction,
)
from .errors import (
    BoundsError,
    DegenerateInputError,
    EngineError,
    FormatError,
    NotFoundError,
    ShapeError,
    SpecError,
)
from .fdeb import (
    BundleParams,
    CompatibilityCache,
    Polyline,
    build_compatibility_cache,
    bundle,
    compatibility,
    export_bundles,
    force_on_point,
    from_edge_set,
    load_bundles,
    subdivide,
)
from .rng import SplitMix64
from .scene import DatasetStore, SceneService, SessionState, build_snapshot, load_store
from .signals import (
    BIOLOGICAL,
    DTB,
    ColorRGBA,
    ComparisonReport,
    SignalSet,
    compare_sets,
    encode_region_color,
    encode_voxel_color,
    load_bold,
    make_signal_set,
    minmax_normalize,
    peak_time,
    region_mean,
    save_bold,
    shared_range_normalize,
    top_regions,
    voxel_mean_over_time,
)
from .slicer import (
    SlicePlane,
    SliceRaster,
    edges_from_slice,
    export_raster,
    plane_axis_map,
    raster,
    voxels_in_slab,
)
from .synthgen import (
    BurstSpec,
    GeneratedFixture,
    GenSpec,
    fixture_f1,
    gen_fixture,
    human_preset,
    macaque_preset,
    write_fixture,
)

__version__ = "0.1.0"
