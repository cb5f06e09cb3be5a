"""Bit-accurate model of a 3-bit-per-cell NAND array.

The array is modeled at the granularity the verification logic consumes:
discrete programmed levels per cell, page buffers that sense and XOR-compare
sectors, and a cell counter. Threshold voltages are represented by the
discrete level alone; program operations can only raise a level, and only a
block erase can bring cells back down.

Concurrency contract: mutating operations on one Device require exclusive
access. Read-only operations (read_page, sense_and_compare,
cell_count_histogram) are pure with respect to device state and may run
against a snapshot. Distinct Device instances are independent.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import NamedTuple, Optional, Sequence

from .errors import BadBlock, DownwardProgram, LengthMismatch, NotErased, OutOfRange

LEVELS = 8  # eight readable distributions for 3-bit cells
BITS_PER_CELL = 3
DEFAULT_ENDURANCE_LIMIT = 1000  # guaranteed erase cycles before a block goes bad


class CellState(IntEnum):
    """Programmed level of one cell. ERASED sits below every programmed level
    and reads back as the P0 bit pattern."""

    ERASED = -1
    P0 = 0
    P1 = 1
    P2 = 2
    P3 = 3
    P4 = 4
    P5 = 5
    P6 = 6
    P7 = 7


PROGRAMMED_STATES = tuple(CellState(v) for v in range(LEVELS))


class PageValidity(Enum):
    FREE = 0
    VALID = 1
    INVALID = 2


class ProgramMode(Enum):
    FULL = "full"
    PARTIAL_OVERWRITE = "partial_overwrite"


class PageAddress(NamedTuple):
    block: int
    page: int


@dataclass(frozen=True)
class Geometry:
    """Device shape. Defaults are desk scale: 16 blocks of 9 pages, 171 cells
    per page (513 bits, one spare bit beyond the 8 x 64-bit sector grid)."""

    blocks_per_device: int = 16
    pages_per_block: int = 9
    cells_per_page: int = 171
    sectors_per_page: int = 8
    bits_per_sector: int = 64

    def __post_init__(self):
        for name in ("blocks_per_device", "pages_per_block", "cells_per_page",
                     "sectors_per_page", "bits_per_sector"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.payload_bits > self.page_bits:
            raise ValueError("sector grid does not fit in the page")

    @property
    def page_bits(self) -> int:
        return BITS_PER_CELL * self.cells_per_page

    @property
    def payload_bits(self) -> int:
        return self.sectors_per_page * self.bits_per_sector

    @property
    def spare_bits(self) -> int:
        return self.page_bits - self.payload_bits

    @property
    def total_pages(self) -> int:
        return self.blocks_per_device * self.pages_per_block

    def page_index(self, addr: PageAddress) -> int:
        """Flat physical page index, used to diversify the scrambler seed."""
        return addr.block * self.pages_per_block + addr.page


@dataclass
class PhysicalPage:
    cells: list[CellState]
    validity: PageValidity = PageValidity.FREE
    logical_owner: Optional[int] = None
    disturb_count: int = 0

    def is_free(self) -> bool:
        return self.validity is PageValidity.FREE


@dataclass
class Block:
    pages: list[PhysicalPage]
    pe_cycles: int = 0
    bad: bool = False
    managed: bool = True


@dataclass
class ReadNoise:
    """Bernoulli bit-flip channel applied at sense time. ber=0 is a clean read."""

    ber: float = 0.0
    rng: random.Random = field(default_factory=random.Random)

    @classmethod
    def seeded(cls, ber: float, seed: int) -> "ReadNoise":
        return cls(ber=ber, rng=random.Random(seed))


@dataclass
class PageBufferResult:
    """Outcome of a sector sense-and-compare: the sensed bits, the XOR with
    the reference, and the population count of the XOR vector."""

    sensed_bits: list[int]
    xor_bits: list[int]
    ones_count: int


def state_to_bits(state: CellState) -> tuple[int, int, int]:
    v = max(int(state), 0)  # ERASED senses as the P0 pattern
    return ((v >> 2) & 1, (v >> 1) & 1, v & 1)


class Device:
    """One NAND die: a list of blocks plus the endurance limit."""

    def __init__(self, geometry: Geometry = Geometry(),
                 endurance_limit: int = DEFAULT_ENDURANCE_LIMIT):
        self.geometry = geometry
        self.endurance_limit = endurance_limit
        self.blocks = [
            Block(pages=[PhysicalPage(cells=[CellState.ERASED] * geometry.cells_per_page)
                         for _ in range(geometry.pages_per_block)])
            for _ in range(geometry.blocks_per_device)
        ]

    # -- addressing ---------------------------------------------------------

    def _check_block(self, block_index: int) -> Block:
        if not 0 <= block_index < self.geometry.blocks_per_device:
            raise OutOfRange(f"block {block_index}")
        return self.blocks[block_index]

    def page_at(self, addr: PageAddress) -> PhysicalPage:
        block = self._check_block(addr.block)
        if not 0 <= addr.page < self.geometry.pages_per_block:
            raise OutOfRange(f"page {addr.page} in block {addr.block}")
        return block.pages[addr.page]

    def all_addresses(self):
        for b in range(self.geometry.blocks_per_device):
            for p in range(self.geometry.pages_per_block):
                yield PageAddress(b, p)

    # -- mutating operations ------------------------------------------------

    def erase_block(self, block_index: int) -> None:
        """Erase every page of the block and charge one PE cycle. Crossing the
        endurance limit marks the block bad and drops it from the managed set."""
        block = self._check_block(block_index)
        if block.bad:
            raise BadBlock(f"block {block_index} is bad")
        for page in block.pages:
            page.cells = [CellState.ERASED] * self.geometry.cells_per_page
            page.validity = PageValidity.FREE
            page.logical_owner = None
            page.disturb_count = 0
        block.pe_cycles += 1
        if block.pe_cycles >= self.endurance_limit:
            block.bad = True
            block.managed = False

    def program_page(self, addr: PageAddress, target_states: Sequence[CellState],
                     mode: ProgramMode = ProgramMode.FULL,
                     disturb_weight: int = 1) -> None:
        """Program a page. FULL requires a free page; PARTIAL_OVERWRITE may only
        raise levels. Neighbor pages on the same word-line axis take program
        disturb proportional to the given weight."""
        page = self.page_at(addr)
        block = self.blocks[addr.block]
        if block.bad:
            raise BadBlock(f"block {addr.block} is bad")
        if len(target_states) > self.geometry.cells_per_page:
            raise LengthMismatch(
                f"{len(target_states)} target states for {self.geometry.cells_per_page} cells")

        if mode is ProgramMode.FULL:
            if not page.is_free():
                raise NotErased(f"page {addr} is not free")
            for i, st in enumerate(target_states):
                page.cells[i] = CellState(st)
            page.validity = PageValidity.VALID
        else:
            for i, st in enumerate(target_states):
                if st < page.cells[i]:
                    raise DownwardProgram(
                        f"cell {i}: {page.cells[i].name} -> {CellState(st).name}")
            for i, st in enumerate(target_states):
                page.cells[i] = CellState(st)
            if page.validity is PageValidity.FREE:
                page.validity = PageValidity.INVALID

        for neighbor in (addr.page - 1, addr.page + 1):
            if 0 <= neighbor < self.geometry.pages_per_block:
                block.pages[neighbor].disturb_count += disturb_weight

    # -- read-only operations -----------------------------------------------

    def read_page(self, addr: PageAddress, noise: Optional[ReadNoise] = None) -> list[int]:
        """Sense all cells as the raw 3-bit level encoding, most significant bit
        first. Ignores the map table entirely; invalid pages read like any other."""
        page = self.page_at(addr)
        bits: list[int] = []
        for state in page.cells:
            bits.extend(state_to_bits(state))
        if noise is not None and noise.ber > 0:
            bits = [b ^ 1 if noise.rng.random() < noise.ber else b for b in bits]
        return bits

    def read_sector(self, addr: PageAddress, sector_index: int,
                    noise: Optional[ReadNoise] = None) -> list[int]:
        if not 0 <= sector_index < self.geometry.sectors_per_page:
            raise OutOfRange(f"sector {sector_index}")
        lo = sector_index * self.geometry.bits_per_sector
        hi = lo + self.geometry.bits_per_sector
        return self.read_page(addr, noise)[lo:hi]

    def sense_and_compare(self, addr: PageAddress, sector_index: int,
                          reference_bits: Sequence[int],
                          noise: Optional[ReadNoise] = None) -> PageBufferResult:
        """Page-buffer compare: XOR the sensed sector against the reference and
        count the resulting ones. Read-only with respect to device state."""
        if len(reference_bits) != self.geometry.bits_per_sector:
            raise LengthMismatch(
                f"reference is {len(reference_bits)} bits, sector is "
                f"{self.geometry.bits_per_sector}")
        sensed = self.read_sector(addr, sector_index, noise)
        xor_bits = [s ^ r for s, r in zip(sensed, reference_bits)]
        return PageBufferResult(sensed_bits=sensed, xor_bits=xor_bits,
                                ones_count=sum(xor_bits))

    def cell_count_histogram(self, addr: PageAddress) -> dict[CellState, int]:
        """Count cells per level. Keys appear only for levels present on the page;
        the counts always sum to cells_per_page."""
        page = self.page_at(addr)
        counts: dict[CellState, int] = {}
        for state in page.cells:
            counts[state] = counts.get(state, 0) + 1
        return counts

    # -- bookkeeping ----------------------------------------------------------

    def free_page_count(self) -> int:
        return sum(1 for blk in self.blocks for pg in blk.pages if pg.is_free())

    def valid_page_count(self) -> int:
        return sum(1 for blk in self.blocks
                   for pg in blk.pages if pg.validity is PageValidity.VALID)
