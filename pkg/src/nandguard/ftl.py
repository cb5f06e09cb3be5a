"""Flash translation layer.

Implements the controller behaviors that create residual data: updates are
written out of place (the superseded physical page keeps its cell states),
garbage collection relocates valid pages and retires victim blocks into an
unmanaged pool without erasing them, wear leveling migrates hot blocks, and
TRIM either defers erasure (leaving residuals) or erases immediately.

The logical address space is capped below the physical capacity by an
over-provisioning fraction; retired blocks rotate through that spare pool
and are only erased on demand, which maximizes the window during which
stale data physically persists.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

from . import codec
from .codec import CodecParams
from .errors import (DeviceFull, LengthMismatch, NothingToCollect, ParameterError,
                     Unmapped)
from .flash_core import (Device, PageAddress, PageValidity, ProgramMode, ReadNoise)


class UnmanagedReason(Enum):
    GC_RETIRED = "gc_retired"
    WEAR_SWAPPED = "wear_swapped"
    BAD = "bad"
    OVER_PROVISION = "over_provision"


class TrimMode(Enum):
    DEFERRED = "deferred"
    IMMEDIATE = "immediate"


@dataclass
class TrimPolicy:
    mode: TrimMode = TrimMode.DEFERRED


@dataclass(frozen=True)
class FtlConfig:
    op_fraction: float = 0.25        # physical capacity withheld from the host
    wear_defer_erase: bool = False   # keep wear-leveled source blocks as residual data
    trim_pressure: float = 0.9       # used-page ratio that forces deferred trims to run
    gc_reserve_blocks: int = 2       # free-block floor that triggers background GC

    def __post_init__(self):
        if not 0 <= self.op_fraction < 1:
            raise ParameterError("op_fraction must be in [0, 1)")
        if not 0 < self.trim_pressure <= 1:
            raise ParameterError("trim_pressure must be in (0, 1]")


@dataclass
class GcReport:
    victims: list[int] = field(default_factory=list)
    moved_pages: int = 0
    retired: dict[int, UnmanagedReason] = field(default_factory=dict)


@dataclass
class WearLevelReport:
    migrated_blocks: list[int] = field(default_factory=list)
    moved_pages: int = 0
    erased_blocks: list[int] = field(default_factory=list)
    deferred_blocks: list[int] = field(default_factory=list)


@dataclass
class TrimReport:
    mode: TrimMode
    invalidated: list[PageAddress] = field(default_factory=list)
    erased_blocks: list[int] = field(default_factory=list)
    relocated_pages: int = 0
    extra_pe: int = 0


class FlashTranslationLayer:
    """Single-writer controller for one device. Reads are side-effect free."""

    def __init__(self, device: Device, params: CodecParams = CodecParams(),
                 config: FtlConfig = FtlConfig(),
                 trim_policy: Optional[TrimPolicy] = None):
        self.device = device
        self.params = params
        self.config = config
        self.trim_policy = trim_policy or TrimPolicy()
        self.map: dict[int, PageAddress] = {}
        self.unmanaged: dict[int, UnmanagedReason] = {}
        self.retired_fifo: list[int] = []  # unmanaged blocks awaiting on-demand erase
        self.trim_queue: list[PageAddress] = []

    # -- capacity -------------------------------------------------------------

    @property
    def logical_capacity(self) -> int:
        total = self.device.geometry.total_pages
        return int(total * (1 - self.config.op_fraction))

    def _usable_blocks(self) -> Iterable[int]:
        for idx, blk in enumerate(self.device.blocks):
            if blk.managed and not blk.bad and idx not in self.unmanaged:
                yield idx

    def _free_pages_in(self, block_index: int) -> int:
        return sum(1 for pg in self.device.blocks[block_index].pages if pg.is_free())

    def free_page_count(self) -> int:
        return sum(self._free_pages_in(b) for b in self._usable_blocks())

    # -- allocation -----------------------------------------------------------

    def _find_free_page(self, exclude: frozenset[int] = frozenset()) -> Optional[PageAddress]:
        # fill partially-programmed blocks first (lowest index), then open the
        # least-worn fully-free block
        partial = []
        fresh = []
        for b in self._usable_blocks():
            if b in exclude:
                continue
            blk = self.device.blocks[b]
            free = self._free_pages_in(b)
            if free == 0:
                continue
            if free == len(blk.pages):
                fresh.append((blk.pe_cycles, b))
            else:
                partial.append(b)
        if partial:
            b = min(partial)
        elif fresh:
            b = min(fresh)[1]
        else:
            return None
        for p, pg in enumerate(self.device.blocks[b].pages):
            if pg.is_free():
                return PageAddress(b, p)
        return None

    def _allocate_page(self, reclaim: bool = True,
                       exclude: frozenset[int] = frozenset()) -> PageAddress:
        while True:
            addr = self._find_free_page(exclude)
            if addr is not None:
                return addr
            if not reclaim or not self._reclaim_step(exclude):
                raise DeviceFull("no free page available")

    def _reclaim_step(self, exclude: frozenset[int]) -> bool:
        if self.retired_fifo:
            self._erase_unmanaged(self.retired_fifo.pop(0))
            return True
        try:
            self.garbage_collect()
            return True
        except NothingToCollect:
            return False

    def _erase_unmanaged(self, block_index: int) -> None:
        self.device.erase_block(block_index)
        blk = self.device.blocks[block_index]
        if blk.bad:
            self.unmanaged[block_index] = UnmanagedReason.BAD
        else:
            self.unmanaged.pop(block_index, None)
            blk.managed = True
        self.trim_queue = [a for a in self.trim_queue if a.block != block_index]

    # -- host operations --------------------------------------------------------

    def write_logical(self, lpn: int, data_bits: Sequence[int]) -> PageAddress:
        """Program the payload into a fresh page and remap. The superseded page
        is only invalidated; its cell states survive until a block erase."""
        geom = self.device.geometry
        if len(data_bits) > geom.payload_bits:
            raise LengthMismatch(
                f"{len(data_bits)} bits exceed page payload {geom.payload_bits}")
        if lpn not in self.map and len(self.map) >= self.logical_capacity:
            raise DeviceFull(f"logical capacity {self.logical_capacity} reached")

        addr = self._allocate_page()
        old = self.map.get(lpn)
        image = codec.assemble_page_image(data_bits, geom.page_index(addr), geom, self.params)
        states = codec.map_to_states(image, self.params.mapping)
        self.device.program_page(addr, states, ProgramMode.FULL, disturb_weight=1)
        self.device.page_at(addr).logical_owner = lpn
        self.map[lpn] = addr
        if old is not None:
            self.device.page_at(old).validity = PageValidity.INVALID
        self._background_maintenance()
        return addr

    def write_text(self, lpn: int, text: str) -> PageAddress:
        return self.write_logical(lpn, codec.encode_text(text))

    def read_logical(self, lpn: int, noise: Optional[ReadNoise] = None) -> list[int]:
        """Return the page payload bits, correcting up to t errors per sector
        when the read is noisy."""
        if lpn not in self.map:
            raise Unmapped(f"lpn {lpn}")
        addr = self.map[lpn]
        geom = self.device.geometry
        raw = self.device.read_page(addr, noise)
        if noise is not None and noise.ber > 0:
            stored = self.device.read_page(addr)
            for s in range(geom.sectors_per_page):
                lo = s * geom.bits_per_sector
                hi = lo + geom.bits_per_sector
                codec.ecc_decode(raw[lo:hi], stored[lo:hi], self.params.ecc)
            raw = stored  # bounded-distance decode lands on the stored codeword
        image = codec.unmap_raw_bits(raw, self.params.mapping)
        return codec.extract_page_data(image, geom.page_index(addr), geom, self.params)

    def read_text(self, lpn: int, noise: Optional[ReadNoise] = None) -> str:
        bits = self.read_logical(lpn, noise)
        return codec.decode_text(bits).rstrip("\x00")

    # -- garbage collection -------------------------------------------------------

    def garbage_collect(self) -> GcReport:
        """Sweep every block holding invalid pages: relocate its valid pages,
        then retire the block unmanaged with its states intact."""
        candidates = []
        for b in self._usable_blocks():
            blk = self.device.blocks[b]
            invalid = sum(1 for pg in blk.pages if pg.validity is PageValidity.INVALID)
            if invalid:
                valid = sum(1 for pg in blk.pages if pg.validity is PageValidity.VALID)
                candidates.append((-invalid, b, valid))
        if not candidates:
            raise NothingToCollect("no block holds invalid pages")

        candidates.sort()
        victims = frozenset(b for _, b, _ in candidates)
        report = GcReport()
        for _, b, valid in candidates:
            if valid > self._spare_room(victims):
                continue  # cannot relocate this victim's live data right now
            self._relocate_valid_pages(b, exclude=victims)
            reason = (UnmanagedReason.OVER_PROVISION if valid == 0
                      else UnmanagedReason.GC_RETIRED)
            blk = self.device.blocks[b]
            blk.managed = False
            self.unmanaged[b] = reason
            self.retired_fifo.append(b)
            report.victims.append(b)
            report.retired[b] = reason
            report.moved_pages += valid
        if not report.victims:
            raise NothingToCollect("no room to relocate any victim")
        return report

    def _spare_room(self, exclude: frozenset[int]) -> int:
        return sum(self._free_pages_in(b) for b in self._usable_blocks()
                   if b not in exclude)

    def _relocate_valid_pages(self, block_index: int, exclude: frozenset[int],
                              dest_block: Optional[int] = None) -> int:
        """Move every valid page of a block elsewhere via the normal write
        pipeline (data is re-scrambled for its new page index)."""
        geom = self.device.geometry
        moved = 0
        for p, pg in enumerate(self.device.blocks[block_index].pages):
            if pg.validity is not PageValidity.VALID:
                continue
            src = PageAddress(block_index, p)
            lpn = pg.logical_owner
            raw = self.device.read_page(src)
            image = codec.unmap_raw_bits(raw, self.params.mapping)
            data = codec.extract_page_data(image, geom.page_index(src), geom, self.params)
            if dest_block is not None:
                dst = self._next_free_in_block(dest_block)
            else:
                dst = self._allocate_page(reclaim=False, exclude=exclude)
            new_image = codec.assemble_page_image(data, geom.page_index(dst), geom, self.params)
            self.device.program_page(dst, codec.map_to_states(new_image, self.params.mapping),
                                     ProgramMode.FULL, disturb_weight=1)
            self.device.page_at(dst).logical_owner = lpn
            if lpn is not None:
                self.map[lpn] = dst
            pg.validity = PageValidity.INVALID
            moved += 1
        return moved

    def _next_free_in_block(self, block_index: int) -> PageAddress:
        for p, pg in enumerate(self.device.blocks[block_index].pages):
            if pg.is_free():
                return PageAddress(block_index, p)
        raise DeviceFull(f"block {block_index} has no free page")

    # -- wear leveling ---------------------------------------------------------

    def wear_level(self, threshold_delta: int = 100) -> WearLevelReport:
        """Migrate data off any block whose erase count exceeds the coolest free
        block by more than the threshold. No-op when wear is balanced."""
        report = WearLevelReport()
        while True:
            fresh = [(self.device.blocks[b].pe_cycles, b) for b in self._usable_blocks()
                     if self._free_pages_in(b) == len(self.device.blocks[b].pages)]
            if not fresh:
                break
            floor_pe = min(fresh)[0]
            hot = [(-self.device.blocks[b].pe_cycles, b) for b in self._usable_blocks()
                   if self.device.blocks[b].pe_cycles > floor_pe + threshold_delta
                   and any(pg.validity is PageValidity.VALID
                           for pg in self.device.blocks[b].pages)]
            if not hot:
                break
            hot.sort()
            b = hot[0][1]
            dest = min(fresh)[1]
            report.moved_pages += self._relocate_valid_pages(
                b, exclude=frozenset({b}), dest_block=dest)
            report.migrated_blocks.append(b)
            if self.config.wear_defer_erase:
                blk = self.device.blocks[b]
                blk.managed = False
                self.unmanaged[b] = UnmanagedReason.WEAR_SWAPPED
                self.retired_fifo.append(b)
                report.deferred_blocks.append(b)
            else:
                self.device.erase_block(b)
                if self.device.blocks[b].bad:
                    self.unmanaged[b] = UnmanagedReason.BAD
                report.erased_blocks.append(b)
        return report

    # -- trim --------------------------------------------------------------------

    def trim(self, lpns: Sequence[int], policy: Optional[TrimPolicy] = None) -> TrimReport:
        """Drop mappings. DEFERRED leaves the physical pages as residual data in
        a queue; IMMEDIATE erases every affected block right away, relocating
        unrelated live pages first."""
        policy = policy or self.trim_policy
        missing = [l for l in lpns if l not in self.map]
        if missing:
            raise Unmapped(f"lpn(s) {missing}")
        report = TrimReport(mode=policy.mode)
        addrs = []
        for lpn in lpns:
            addr = self.map.pop(lpn)
            self.device.page_at(addr).validity = PageValidity.INVALID
            addrs.append(addr)
        report.invalidated = addrs

        if policy.mode is TrimMode.DEFERRED:
            self.trim_queue.extend(addrs)
            self._maybe_flush_trim(report)
        else:
            for b in sorted({a.block for a in addrs}):
                report.relocated_pages += self._relocate_valid_pages(
                    b, exclude=frozenset({b}))
                self.device.erase_block(b)
                if self.device.blocks[b].bad:
                    self.unmanaged[b] = UnmanagedReason.BAD
                report.erased_blocks.append(b)
                report.extra_pe += 1
        return report

    def _maybe_flush_trim(self, report: Optional[TrimReport] = None) -> None:
        if not self.trim_queue:
            return
        total = self.device.geometry.total_pages
        used_ratio = 1 - self.free_page_count() / total
        if used_ratio < self.config.trim_pressure:
            return
        queued = self.trim_queue
        queued_blocks = sorted({a.block for a in queued})
        self.trim_queue = []
        for b in queued_blocks:
            if b in self.unmanaged:
                if b in self.retired_fifo:
                    self.retired_fifo.remove(b)
                    self._erase_unmanaged(b)
                continue
            if self.device.blocks[b].bad:
                continue
            valid = sum(1 for pg in self.device.blocks[b].pages
                        if pg.validity is PageValidity.VALID)
            if valid > self._spare_room(frozenset({b})):
                self.trim_queue.extend(a for a in queued if a.block == b)
                continue
            relocated = self._relocate_valid_pages(b, exclude=frozenset({b}))
            self.device.erase_block(b)
            if self.device.blocks[b].bad:
                self.unmanaged[b] = UnmanagedReason.BAD
            if report is not None:
                report.relocated_pages += relocated
                report.erased_blocks.append(b)
                report.extra_pe += 1

    # -- maintenance and bookkeeping ------------------------------------------------

    def _background_maintenance(self) -> None:
        self._maybe_flush_trim()
        reserve = self.config.gc_reserve_blocks * self.device.geometry.pages_per_block
        if self.free_page_count() < reserve:
            try:
                self.garbage_collect()
            except NothingToCollect:
                pass

    def forget_mapping_for(self, addr: PageAddress) -> Optional[int]:
        """Drop whichever lpn points at this physical page, if any. Used when a
        live copy is deliberately destroyed."""
        for lpn, mapped in self.map.items():
            if mapped == addr:
                del self.map[lpn]
                self.device.page_at(addr).validity = PageValidity.INVALID
                return lpn
        return None

    def check_invariants(self) -> None:
        """Raise AssertionError on any broken structural invariant."""
        addrs = list(self.map.values())
        assert len(addrs) == len(set(addrs)), "map is not injective"
        for lpn, addr in self.map.items():
            page = self.device.page_at(addr)
            assert page.validity is PageValidity.VALID, f"mapped page {addr} not VALID"
            assert page.logical_owner == lpn, f"owner mismatch at {addr}"
            assert addr.block not in self.unmanaged, f"mapped page in unmanaged block {addr}"
        assert self.device.valid_page_count() == len(self.map), \
            "VALID page count differs from map size"
        for b, reason in self.unmanaged.items():
            blk = self.device.blocks[b]
            assert not blk.managed, f"unmanaged block {b} still flagged managed"
            if reason is UnmanagedReason.BAD:
                assert blk.bad
