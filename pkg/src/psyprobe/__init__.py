"""psyprobe: black-box psychophysical probing of image classifiers and the
Deepception decoy-insertion attack.
"""

from .deepception import (
    AttackConfig,
    AttackResult,
    attack,
    decoy_std_study,
    fooling_campaign,
    select_decoy,
    transparency_study,
)
from .errors import PsyprobeError
from .image import (
    Decoy,
    Grid,
    Rect,
    apply_decoy,
    crop,
    gaussian_noise_image,
    grid_cells,
    insert_patch,
    make_black_canvas,
    make_decoy,
    normalize_patch,
    resize,
    weakest_channel,
)
from .oracle import (
    ClassProbabilities,
    LocalOracle,
    Oracle,
    OracleBudget,
    RemoteOracle,
    SyntheticOracle,
    SyntheticOracleSpec,
    synthetic_score,
)
from .probing import (
    Patch,
    PlacementTrace,
    ProbabilityMap,
    extract_best_patch,
    greedy_cumulative,
    local_property_curve,
    spatial_map,
    spatial_stats,
)
from .sampling import sample_images

__version__ = "0.1.0"

__all__ = [
    "AttackConfig",
    "AttackResult",
    "ClassProbabilities",
    "Decoy",
    "Grid",
    "LocalOracle",
    "Oracle",
    "OracleBudget",
    "Patch",
    "PlacementTrace",
    "ProbabilityMap",
    "PsyprobeError",
    "Rect",
    "RemoteOracle",
    "SyntheticOracle",
    "SyntheticOracleSpec",
    "apply_decoy",
    "attack",
    "crop",
    "decoy_std_study",
    "extract_best_patch",
    "fooling_campaign",
    "gaussian_noise_image",
    "greedy_cumulative",
    "grid_cells",
    "insert_patch",
    "local_property_curve",
    "make_black_canvas",
    "make_decoy",
    "normalize_patch",
    "resize",
    "sample_images",
    "select_decoy",
    "spatial_map",
    "spatial_stats",
    "synthetic_score",
    "transparency_study",
    "weakest_channel",
]
