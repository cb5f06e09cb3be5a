"""Secure-deletion schemes applied to physical pages.

All four schemes only ever raise cell levels (they are program operations,
not erases), so they work on valid and invalid pages alike and cost no
block erase. They differ in what data must be generated, whether they add
cell wear, and how hard they disturb neighboring pages:

    scheme             generated bits   wear   disturb weight
    scrub              cells (fixed)    +1     3
    partial overwrite  3 x cells        0      2
    down-bit program   cells            0      1
    deletion pulse     none             0      1 per pulse
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .errors import ParameterError
from .flash_core import CellState, Device, PageAddress, PageValidity, ProgramMode

# down-bit programming collapses the 8 levels to a 1-bit read at this boundary
SLC_BOUNDARY = CellState.P4
# pulses needed to drive an erased cell all the way to the top level
SATURATION_PULSES = 7

DISTURB_WEIGHT = {
    "scrub": 3,
    "partial_overwrite": 2,
    "down_bit": 1,
    "deletion_pulse": 1,  # per pulse
}


class SanitizeScheme(Enum):
    SCRUB = "scrub"
    PARTIAL_OVERWRITE = "partial_overwrite"
    DOWN_BIT = "down_bit"
    DELETION_PULSE = "deletion_pulse"


@dataclass
class SanitizeMetrics:
    scheme: SanitizeScheme
    generated_bits: int
    wear_delta: int
    disturb_events: int
    duration_units: int


def _neighbor_count(device: Device, addr: PageAddress) -> int:
    last = device.geometry.pages_per_block - 1
    return (1 if addr.page > 0 else 0) + (1 if addr.page < last else 0)


def scrub(device: Device, addr: PageAddress) -> SanitizeMetrics:
    """Program every cell to the top level. The only scheme that measurably
    ages the cells."""
    cells = device.geometry.cells_per_page
    device.program_page(addr, [CellState.P7] * cells,
                        ProgramMode.PARTIAL_OVERWRITE,
                        disturb_weight=DISTURB_WEIGHT["scrub"])
    device.page_at(addr).validity = PageValidity.INVALID
    return SanitizeMetrics(
        scheme=SanitizeScheme.SCRUB,
        generated_bits=cells,
        wear_delta=1,
        disturb_events=DISTURB_WEIGHT["scrub"] * _neighbor_count(device, addr),
        duration_units=1,
    )


def partial_overwrite(device: Device, addr: PageAddress,
                      rng_seed: int = 0) -> SanitizeMetrics:
    """Raise each cell to a seeded-random level at or above its current one."""
    rng = random.Random(rng_seed)
    page = device.page_at(addr)
    targets = [CellState(rng.randint(max(int(c), 0), int(CellState.P7)))
               for c in page.cells]
    device.program_page(addr, targets, ProgramMode.PARTIAL_OVERWRITE,
                        disturb_weight=DISTURB_WEIGHT["partial_overwrite"])
    page.validity = PageValidity.INVALID
    cells = device.geometry.cells_per_page
    return SanitizeMetrics(
        scheme=SanitizeScheme.PARTIAL_OVERWRITE,
        generated_bits=3 * cells,
        wear_delta=0,
        disturb_events=DISTURB_WEIGHT["partial_overwrite"] * _neighbor_count(device, addr),
        duration_units=1,
    )


def down_bit_program(device: Device, addr: PageAddress) -> SanitizeMetrics:
    """Collapse the page to single-bit granularity: everything below the SLC
    boundary is pushed up to it, destroying the multi-bit content."""
    page = device.page_at(addr)
    targets = [c if c >= SLC_BOUNDARY else SLC_BOUNDARY for c in page.cells]
    device.program_page(addr, targets, ProgramMode.PARTIAL_OVERWRITE,
                        disturb_weight=DISTURB_WEIGHT["down_bit"])
    page.validity = PageValidity.INVALID
    cells = device.geometry.cells_per_page
    return SanitizeMetrics(
        scheme=SanitizeScheme.DOWN_BIT,
        generated_bits=cells,
        wear_delta=0,
        disturb_events=DISTURB_WEIGHT["down_bit"] * _neighbor_count(device, addr),
        duration_units=1,
    )


def deletion_pulse(device: Device, addr: PageAddress, pulses: int) -> SanitizeMetrics:
    """Apply program pulses without loading any data: each pulse lifts every
    cell one level, saturating at the top."""
    if pulses < 1:
        raise ParameterError("pulses must be >= 1")
    page = device.page_at(addr)
    for _ in range(pulses):
        targets = [CellState(min(int(c) + 1, int(CellState.P7))) for c in page.cells]
        device.program_page(addr, targets, ProgramMode.PARTIAL_OVERWRITE,
                            disturb_weight=DISTURB_WEIGHT["deletion_pulse"])
    page.validity = PageValidity.INVALID
    return SanitizeMetrics(
        scheme=SanitizeScheme.DELETION_PULSE,
        generated_bits=0,
        wear_delta=0,
        disturb_events=DISTURB_WEIGHT["deletion_pulse"] * pulses * _neighbor_count(device, addr),
        duration_units=pulses,
    )


def sanitize(device: Device, addr: PageAddress, scheme: SanitizeScheme,
             rng_seed: int = 0, pulses: Optional[int] = None) -> SanitizeMetrics:
    """Dispatch to one scheme. Deletion pulses default to a single application;
    pass pulses=SATURATION_PULSES to guarantee every cell reaches the top."""
    if scheme is SanitizeScheme.SCRUB:
        return scrub(device, addr)
    if scheme is SanitizeScheme.PARTIAL_OVERWRITE:
        return partial_overwrite(device, addr, rng_seed)
    if scheme is SanitizeScheme.DOWN_BIT:
        return down_bit_program(device, addr)
    if scheme is SanitizeScheme.DELETION_PULSE:
        return deletion_pulse(device, addr, 1 if pulses is None else pulses)
    raise ParameterError(f"unknown scheme {scheme!r}")
