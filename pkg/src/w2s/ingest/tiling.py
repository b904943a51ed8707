"""Tile images to a uniform resolution, remapping boxes into tile coordinates."""

from __future__ import annotations

from ..geometry import box_area, intersect
from ..records import ImageRecord, Instance

DEFAULT_TILE = 1024
DEFAULT_OVERLAP = 200
DEFAULT_MIN_VISIBLE = 0.5


def axis_origins(dim: int, tile: int, overlap: int) -> list[int]:
    """Tile origins along one axis.

    Origins advance by stride = tile - overlap; the final origin is clamped
    to dim - tile so the last tile ends exactly at the image edge. An image
    no larger than the tile yields the single origin 0.
    """
    if tile <= overlap or overlap < 0:
        raise ValueError(f"require tile > overlap >= 0, got tile={tile} overlap={overlap}")
    if dim <= tile:
        return [0]
    stride = tile - overlap
    origins = []
    k = 0
    while True:
        o = k * stride
        if o + tile >= dim:
            origins.append(dim - tile)
            break
        origins.append(o)
        k += 1
    return sorted(set(origins))


def tile_image(
    record: ImageRecord,
    tile: int = DEFAULT_TILE,
    overlap: int = DEFAULT_OVERLAP,
    min_visible: float = DEFAULT_MIN_VISIBLE,
) -> list[ImageRecord]:
    """Split one record into tile records with boxes clipped and remapped.

    A clipped box is kept iff clipped-area / original-area >= min_visible.
    Images smaller than the tile produce a single whole-image tile. Output
    is ordered by (source, id, tile_origin).
    """
    if not (0.0 < min_visible <= 1.0):
        raise ValueError(f"min_visible must be in (0,1], got {min_visible}")
    record.validate()
    xs = axis_origins(record.width, tile, overlap)
    ys = axis_origins(record.height, tile, overlap)
    tile_w = min(tile, record.width)
    tile_h = min(tile, record.height)

    tiles = []
    for oy in ys:
        for ox in xs:
            extent = (float(ox), float(oy), float(ox + tile_w), float(oy + tile_h))
            out = ImageRecord(
                id=f"{record.id}__{ox}_{oy}",
                source=record.source,
                width=tile_w,
                height=tile_h,
                tile_origin=(ox, oy),
                partition=record.partition,
                image_path=record.image_path,
            )
            for inst in record.instances:
                clipped = intersect(inst.box, extent)
                if clipped is None:
                    continue
                if box_area(clipped) / box_area(inst.box) < min_visible:
                    continue
                local = (clipped[0] - ox, clipped[1] - oy, clipped[2] - ox, clipped[3] - oy)
                out.instances.append(
                    Instance(
                        id=inst.id,
                        box=local,
                        category=inst.category,
                        area_ratio=box_area(local) / (tile_w * tile_h),
                    )
                )
            out.validate()
            tiles.append(out)
    tiles.sort(key=lambda r: (r.source, r.id, r.tile_origin))
    return tiles


def tile_records(
    records: list[ImageRecord],
    tile: int = DEFAULT_TILE,
    overlap: int = DEFAULT_OVERLAP,
    min_visible: float = DEFAULT_MIN_VISIBLE,
) -> list[ImageRecord]:
    tiles: list[ImageRecord] = []
    for record in records:
        tiles.extend(tile_image(record, tile=tile, overlap=overlap, min_visible=min_visible))
    tiles.sort(key=lambda r: (r.source, r.id, r.tile_origin))
    return tiles
