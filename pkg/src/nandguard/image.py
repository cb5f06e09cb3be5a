"""Binary flash-image persistence.

Layout (all integers little-endian):

    header    magic "NGT1", then blocks, pages, cells, sectors, sector_bits,
              endurance limit as u32
    blocks    per block: pe_cycles u32, flags u8 (bit0 bad, bit1 managed);
              per page: validity u8, logical_owner i64 (-1 none), disturb u32,
              packed 4-bit level codes (ERASED=0xF, P0..P7=0..7, even cell in
              the low nibble)
    appendix  translation-layer state: map table entries, unmanaged set with
              reasons, retirement order, trim mode and queue, layer config

The device section alone defines the physical state hash used by the
read-only guarantees in tests.
"""

from __future__ import annotations

import hashlib
import struct
from typing import Optional

from .codec import CodecParams
from .errors import CorruptImage, VersionMismatch
from .flash_core import (CellState, Device, Geometry, PageAddress, PageValidity,
                         PhysicalPage)
from .ftl import FlashTranslationLayer, FtlConfig, TrimMode, TrimPolicy, UnmanagedReason

MAGIC = b"NGT1"

_REASON_CODE = {
    UnmanagedReason.GC_RETIRED: 0,
    UnmanagedReason.WEAR_SWAPPED: 1,
    UnmanagedReason.BAD: 2,
    UnmanagedReason.OVER_PROVISION: 3,
}
_REASON_FROM_CODE = {v: k for k, v in _REASON_CODE.items()}

_VALIDITY_CODE = {PageValidity.FREE: 0, PageValidity.VALID: 1, PageValidity.INVALID: 2}
_VALIDITY_FROM_CODE = {v: k for k, v in _VALIDITY_CODE.items()}


def _pack_cells(cells) -> bytes:
    nibbles = [0xF if c is CellState.ERASED else int(c) for c in cells]
    if len(nibbles) % 2:
        nibbles.append(0)
    return bytes((nibbles[i] | (nibbles[i + 1] << 4)) for i in range(0, len(nibbles), 2))


def _unpack_cells(data: bytes, count: int) -> list[CellState]:
    cells = []
    for i in range(count):
        nib = (data[i // 2] >> (4 * (i % 2))) & 0xF
        if nib == 0xF:
            cells.append(CellState.ERASED)
        elif nib < 8:
            cells.append(CellState(nib))
        else:
            raise CorruptImage(f"invalid level code {nib:#x}")
    return cells


def device_to_bytes(device: Device) -> bytes:
    g = device.geometry
    out = bytearray()
    out += MAGIC
    out += struct.pack("<6I", g.blocks_per_device, g.pages_per_block, g.cells_per_page,
                       g.sectors_per_page, g.bits_per_sector, device.endurance_limit)
    for blk in device.blocks:
        flags = (1 if blk.bad else 0) | ((1 if blk.managed else 0) << 1)
        out += struct.pack("<IB", blk.pe_cycles, flags)
        for page in blk.pages:
            owner = -1 if page.logical_owner is None else page.logical_owner
            out += struct.pack("<BqI", _VALIDITY_CODE[page.validity], owner,
                               page.disturb_count)
            out += _pack_cells(page.cells)
    return bytes(out)


def ftl_to_bytes(ftl: FlashTranslationLayer) -> bytes:
    out = bytearray()
    out += struct.pack("<I", len(ftl.map))
    for lpn in sorted(ftl.map):
        addr = ftl.map[lpn]
        out += struct.pack("<qII", lpn, addr.block, addr.page)
    out += struct.pack("<I", len(ftl.unmanaged))
    for b in sorted(ftl.unmanaged):
        out += struct.pack("<IB", b, _REASON_CODE[ftl.unmanaged[b]])
    out += struct.pack("<I", len(ftl.retired_fifo))
    for b in ftl.retired_fifo:
        out += struct.pack("<I", b)
    out += struct.pack("<BI", 1 if ftl.trim_policy.mode is TrimMode.IMMEDIATE else 0,
                       len(ftl.trim_queue))
    for addr in ftl.trim_queue:
        out += struct.pack("<II", addr.block, addr.page)
    cfg = ftl.config
    out += struct.pack("<ddBI", cfg.op_fraction, cfg.trim_pressure,
                       1 if cfg.wear_defer_erase else 0, cfg.gc_reserve_blocks)
    return bytes(out)


def state_hash(device: Device) -> str:
    """Hash of the physical array state only; stable across pure reads."""
    return hashlib.sha256(device_to_bytes(device)).hexdigest()


def image_save(path, device: Device, ftl: FlashTranslationLayer) -> None:
    with open(path, "wb") as fh:
        fh.write(device_to_bytes(device))
        fh.write(ftl_to_bytes(ftl))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise CorruptImage("truncated image")
        values = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return values

    def raw(self, size: int) -> bytes:
        if self.pos + size > len(self.data):
            raise CorruptImage("truncated image")
        chunk = self.data[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def done(self) -> bool:
        return self.pos == len(self.data)


def image_load(path, params: Optional[CodecParams] = None
               ) -> tuple[Device, FlashTranslationLayer]:
    with open(path, "rb") as fh:
        data = fh.read()
    r = _Reader(data)
    magic = r.raw(4)
    if magic[:3] != MAGIC[:3]:
        raise CorruptImage(f"bad magic {magic!r}")
    if magic != MAGIC:
        raise VersionMismatch(f"unsupported format version {magic!r}")
    blocks, pages, cells, sectors, sector_bits, endurance = r.take("<6I")
    try:
        geometry = Geometry(blocks_per_device=blocks, pages_per_block=pages,
                            cells_per_page=cells, sectors_per_page=sectors,
                            bits_per_sector=sector_bits)
    except ValueError as exc:
        raise CorruptImage(f"bad geometry: {exc}") from exc

    device = Device(geometry, endurance_limit=endurance)
    cell_bytes = (cells + 1) // 2
    for blk in device.blocks:
        pe, flags = r.take("<IB")
        blk.pe_cycles = pe
        blk.bad = bool(flags & 1)
        blk.managed = bool(flags & 2)
        for page in blk.pages:
            vcode, owner, disturb = r.take("<BqI")
            if vcode not in _VALIDITY_FROM_CODE:
                raise CorruptImage(f"invalid validity code {vcode}")
            page.validity = _VALIDITY_FROM_CODE[vcode]
            page.logical_owner = None if owner < 0 else owner
            page.disturb_count = disturb
            page.cells = _unpack_cells(r.raw(cell_bytes), cells)
            if page.validity is PageValidity.FREE and any(
                    c is not CellState.ERASED for c in page.cells):
                raise CorruptImage("free page with programmed cells")

    (map_count,) = r.take("<I")
    mapping: dict[int, PageAddress] = {}
    for _ in range(map_count):
        lpn, b, p = r.take("<qII")
        if not (0 <= b < blocks and 0 <= p < pages):
            raise CorruptImage(f"map entry out of range: {b}/{p}")
        mapping[lpn] = PageAddress(b, p)
    (unmanaged_count,) = r.take("<I")
    unmanaged: dict[int, UnmanagedReason] = {}
    for _ in range(unmanaged_count):
        b, code = r.take("<IB")
        if code not in _REASON_FROM_CODE:
            raise CorruptImage(f"invalid unmanaged reason {code}")
        unmanaged[b] = _REASON_FROM_CODE[code]
    (retired_count,) = r.take("<I")
    retired = [r.take("<I")[0] for _ in range(retired_count)]
    trim_code, queue_count = r.take("<BI")
    queue = [PageAddress(*r.take("<II")) for _ in range(queue_count)]
    op_fraction, trim_pressure, wear_defer, gc_reserve = r.take("<ddBI")
    if not r.done():
        raise CorruptImage("trailing bytes after appendix")

    ftl = FlashTranslationLayer(
        device,
        params=params or CodecParams(),
        config=FtlConfig(op_fraction=op_fraction, trim_pressure=trim_pressure,
                         wear_defer_erase=bool(wear_defer),
                         gc_reserve_blocks=gc_reserve),
        trim_policy=TrimPolicy(mode=TrimMode.IMMEDIATE if trim_code else TrimMode.DEFERRED),
    )
    ftl.map = mapping
    ftl.unmanaged = unmanaged
    ftl.retired_fifo = retired
    ftl.trim_queue = queue
    return device, ftl
