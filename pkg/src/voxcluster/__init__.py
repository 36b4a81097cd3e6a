"""voxcluster: feature extraction from gridded 3D intensity volumes.

Pipeline: load or synthesize a volume (VXG1), take first-order intensity
statistics, run intensity-weighted DBSCAN on the voxel lattice, rank the
resulting clusters by size, then slice features out with rank / region /
intensity filters and characterize them.
"""

from .errors import (
    CorruptFileError,
    EmptyDataError,
    InvalidHeaderError,
    InvalidRangeError,
    MissingParameterError,
    OutOfRangeError,
    VolumeFormatError,
    VoxclusterError,
)
from .features import (
    ClusterRecord,
    ClusterTable,
    IntensityFilter,
    Multiplet,
    PointSet,
    Selection,
    characterize,
    detect_index_groups,
    export_cluster_table,
    export_points,
    export_size_rank,
    rank_clusters,
    select,
    symmetry_groups,
)
from .stats import Histogram, IntensityStats, collect_stats, export_histogram, intensity_stats
from .synth import (
    Bar,
    Broomstick,
    ConeShell,
    GaussianPeak,
    SynthSpec,
    combine_masks,
    generate,
    load_synth_spec,
    write_synth_spec,
)
from .volume import (
    AxisSpec,
    VoxelGrid,
    index_to_q,
    linear_index,
    load_volume,
    q_to_index,
    save_volume,
)
from .wdbscan import (
    LabelVolume,
    Stencil,
    WdbscanParams,
    build_stencil,
    classify_cores,
    cluster,
    load_labels,
    save_labels,
    weight,
)

__version__ = "0.1.0"
