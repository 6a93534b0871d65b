"""Indoor partition-based path loss prediction and measurement analysis."""

from .errors import DataError
from .geometry import Point, Segment, clutter_count, crossing_counts, fresnel_radius, segment_intersection
from .propagation import (
    BAND_2P5,
    BAND_60,
    FrequencyBand,
    PathLossFit,
    coverage_grid,
    free_space_path_loss,
    log_distance_path_loss,
    partition_path_loss,
    sample_shadowing,
)
from .sitemodel import SiteModel, parse_site, validate_site

__version__ = "0.1.0"
