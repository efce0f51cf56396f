"""Direction-preserving compounding of tracked freehand 3D ultrasound sweeps."""

__version__ = "0.1.0"

from .core import (  # noqa: E402,F401
    Frame,
    Pose,
    Sample,
    SphericalModel,
    Sweep,
    SymmetricTensor,
    Volume,
    VoxelLattice,
    sample_of_pixel,
)
from .grids import (  # noqa: F401
    SphericalGrid,
    build_fibonacci,
    build_grid,
    build_icosahedral,
    build_lat_long,
    cell_area_stats,
    cell_of,
    cell_of_many,
    direction_of,
    spherical_variance,
)
from .selection import (  # noqa: F401
    SampleSubset,
    SelectionEllipsoid,
    ellipsoid_contains,
    select_samples,
)
from .reconstruct import (  # noqa: F401
    ReconstructionConfig,
    compound_mean,
    compound_median,
    fit_spherical,
    fit_tensor,
    lattice_for_sweep,
    reconstruct_volume,
)
from .simulate import (  # noqa: F401
    FrameGeometry,
    Occluder,
    Primitive,
    Scene,
    TrajectorySpec,
    directional_intensity,
    generate_sweep,
)
from .evaluate import (  # noqa: F401
    ErrorReport,
    binned_error,
    intensity_variance,
    representation_error,
    reproject,
)
from .render import (  # noqa: F401
    SlicePlane,
    direction_color,
    dominant_intensity,
    extract_slice,
    free_view_image,
    spherical_max_intensity,
    spherical_mean_intensity,
    tensor_trace_intensity,
)
from .io import read_sweep, read_volume, write_sweep, write_volume  # noqa: F401
