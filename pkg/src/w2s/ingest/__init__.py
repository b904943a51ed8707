"""Source-dataset ingestion: dialect parsing, category mapping, tiling."""

from .dialects import (
    DIALECTS,
    MappingError,
    ParseError,
    SourceDatasetDescriptor,
    normalize_category,
    parse_source_annotations,
)
from .tiling import axis_origins, tile_image, tile_records

__all__ = [
    "DIALECTS",
    "MappingError",
    "ParseError",
    "SourceDatasetDescriptor",
    "normalize_category",
    "parse_source_annotations",
    "axis_origins",
    "tile_image",
    "tile_records",
]
