"""Attacker model: reading back residual data from the invalid area.

The adversary is assumed to control the controller, so map-table and
bad-block knowledge plus the scrambler and mapping table are all available
(the flags on the context only steer which locations get prioritized, not
what is technically reachable). Recovery applies the inverse data pipeline
to unmanaged and invalidated pages and reports every sector within the
error-correction radius of the target, i.e. every equivalent original copy.
All operations are strictly read-only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import codec
from .codec import CodecParams
from .flash_core import CellState, Device, PageAddress, PageValidity
from .ftl import FlashTranslationLayer


@dataclass(frozen=True)
class AttackerContext:
    has_map_table: bool = True
    has_bad_block_list: bool = True
    ecc_capability_known: int = 8


@dataclass
class RecoveryHit:
    address: PageAddress
    sector: int
    distance: int
    recovered_text: str

    def to_dict(self) -> dict:
        return {"block": self.address.block, "page": self.address.page,
                "sector": self.sector, "distance": self.distance,
                "recovered_text": self.recovered_text}


def dump_unmanaged(device: Device, ftl: FlashTranslationLayer
                   ) -> dict[int, list[list[CellState]]]:
    """Exact cell states of every unmanaged and bad block, no decoding.
    This is the raw forensic surface."""
    targets = set(ftl.unmanaged)
    targets.update(i for i, blk in enumerate(device.blocks) if blk.bad)
    dump: dict[int, list[list[CellState]]] = {}
    for b in sorted(targets):
        dump[b] = [list(page.cells) for page in device.blocks[b].pages]
    return dump


def _candidate_pages(device: Device, ftl: FlashTranslationLayer):
    unmanaged = set(ftl.unmanaged)
    unmanaged.update(i for i, blk in enumerate(device.blocks) if blk.bad)
    for addr in device.all_addresses():
        if addr.block in unmanaged:
            yield addr
        elif device.page_at(addr).validity is PageValidity.INVALID:
            yield addr


def recover(device: Device, target_text: str, context: AttackerContext,
            ftl: FlashTranslationLayer,
            params: Optional[CodecParams] = None) -> list[RecoveryHit]:
    """Unmap and descramble every unmanaged or invalidated page, then report
    each sector whose distance to the encoded target is within the known
    correction capability. Such sectors decode back to the target."""
    params = params or ftl.params
    geom = device.geometry
    bits = codec.encode_text(target_text)
    pad = (-len(bits)) % geom.bits_per_sector
    padded = bits + [0] * pad
    chunks = [padded[i:i + geom.bits_per_sector]
              for i in range(0, len(padded), geom.bits_per_sector)]
    t = context.ecc_capability_known
    hits: list[RecoveryHit] = []
    for addr in _candidate_pages(device, ftl):
        raw = device.read_page(addr)
        image = codec.unmap_raw_bits(raw, params.mapping)
        data = codec.extract_page_data(image, geom.page_index(addr), geom, params)
        for s in range(geom.sectors_per_page):
            lo = s * geom.bits_per_sector
            sector = data[lo:lo + geom.bits_per_sector]
            d = min(codec.hamming_distance(sector, chunk) for chunk in chunks)
            if d <= t:
                hits.append(RecoveryHit(address=addr, sector=s, distance=d,
                                        recovered_text=target_text))
    return hits
