"""Data lifecycle between host text and cell states.

Write path: text -> binary code -> scrambled (XOR with a per-page LFSR
keystream) -> 3-bit groups mapped to cell levels. Read path is the exact
inverse. The error-correction model is a bounded-distance oracle: a read
decodes iff it lies within Hamming distance t of the stored codeword, which
is all the verification logic ever observes of a real code.

Page images built for the array carry one refinement over the plain
scramble: when the geometry leaves spare bits beyond the sector grid, the
write path tries two keystream phases and keeps whichever gives the flatter
cell-level histogram, recording the choice in the first spare bit. Normal
pages therefore show near-uniform level counts, which is the premise the
distribution-based deletion check rests on.

Everything here is a pure function; all types are immutable value objects.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

from .errors import LengthMismatch, NonAsciiCharacter, ParameterError, DecodeFailure
from .flash_core import BITS_PER_CELL, LEVELS, CellState, Geometry

LFSR_WIDTH = 16
LFSR_PERIOD = (1 << LFSR_WIDTH) - 1
DEFAULT_TAPS = frozenset({16, 14, 13, 11})
DEFAULT_SEED_BASE = 0x2A
# flipped into the seed for the alternate keystream phase
SEED_SELECT_MASK = 0x8000


def _nonzero16(seed: int) -> int:
    seed &= 0xFFFF
    return seed if seed else 0x0001


@lru_cache(maxsize=None)
def _tap_shift_mask(taps: tuple[int, ...]) -> int:
    # polynomial exponent e contributes bit (width - e) under the
    # shift-right register convention
    mask = 0
    for e in taps:
        if not 1 <= e <= LFSR_WIDTH:
            raise ParameterError(f"tap {e} outside register width {LFSR_WIDTH}")
        mask |= 1 << (LFSR_WIDTH - e)
    return mask


@lru_cache(maxsize=None)
def _register_period(taps: tuple[int, ...]) -> int:
    mask = _tap_shift_mask(taps)
    state = 1
    for step in range(1, LFSR_PERIOD + 2):
        fb = (state & mask).bit_count() & 1
        state = (state >> 1) | (fb << (LFSR_WIDTH - 1))
        if state == 1:
            return step
    return -1


@lru_cache(maxsize=4096)
def _keystream(taps: tuple[int, ...], seed: int, nbits: int) -> tuple[int, ...]:
    mask = _tap_shift_mask(taps)
    state = _nonzero16(seed)
    out = []
    for _ in range(nbits):
        out.append(state & 1)
        fb = (state & mask).bit_count() & 1
        state = (state >> 1) | (fb << (LFSR_WIDTH - 1))
    return tuple(out)


@dataclass(frozen=True)
class ScramblerConfig:
    """Width-16 linear feedback register with maximal-length taps. The per-page
    seed is the base value XORed with the physical page index; zero is replaced
    by 0x0001 because the register would stick."""

    taps: frozenset = DEFAULT_TAPS
    seed_base: int = DEFAULT_SEED_BASE

    def __post_init__(self):
        if not 0 <= self.seed_base <= 0xFFFF:
            raise ParameterError("seed_base must be a 16-bit value")
        if _register_period(self._tap_key()) != LFSR_PERIOD:
            raise ParameterError(f"taps {sorted(self.taps)} are not maximal length")

    def _tap_key(self) -> tuple[int, ...]:
        return tuple(sorted(self.taps))

    def seed_for_page(self, physical_page_index: int) -> int:
        return _nonzero16(self.seed_base ^ (physical_page_index & 0xFFFF))

    def keystream(self, physical_page_index: int, nbits: int,
                  selector: int = 0) -> list[int]:
        seed = self.seed_for_page(physical_page_index)
        if selector:
            seed = _nonzero16(seed ^ SEED_SELECT_MASK)
        return list(_keystream(self._tap_key(), seed, nbits))


def encode_text(text: str) -> list[int]:
    """Text to binary code: eight bits per character, most significant first."""
    bits: list[int] = []
    for ch in text:
        code = ord(ch)
        if code > 0x7F:
            raise NonAsciiCharacter(f"character {ch!r} is not 7-bit safe")
        bits.extend((code >> (7 - i)) & 1 for i in range(8))
    return bits


def decode_text(bits: Sequence[int]) -> str:
    if len(bits) % 8:
        raise LengthMismatch("bit length is not a multiple of 8")
    chars = []
    for i in range(0, len(bits), 8):
        code = 0
        for b in bits[i:i + 8]:
            code = (code << 1) | b
        chars.append(chr(code))
    return "".join(chars)


def scramble(bits: Sequence[int], physical_page_index: int,
             config: ScramblerConfig) -> list[int]:
    """XOR with the page keystream. Self-inverse, so descrambling is the same call."""
    ks = config.keystream(physical_page_index, len(bits))
    return [b ^ k for b, k in zip(bits, ks)]


descramble = scramble


@dataclass(frozen=True)
class MappingTable:
    """Bijection between 3-bit groups and the eight cell levels. The default is
    direct binary: group value v maps to level v."""

    forward: tuple = tuple(CellState(v) for v in range(LEVELS))

    def __post_init__(self):
        if len(self.forward) != LEVELS or len(set(self.forward)) != LEVELS:
            raise ParameterError("mapping must be a bijection over the 8 levels")
        if any(s is CellState.ERASED for s in self.forward):
            raise ParameterError("ERASED is not a mapping target")

    def inverse_value(self, state: CellState) -> int:
        if state is CellState.ERASED:
            state = CellState.P0  # erased cells sense as the P0 level
        return self.forward.index(state)


DIRECT_MAPPING = MappingTable()


def pad_length(nbits: int) -> int:
    """Zero bits appended so the vector fills whole 3-bit groups."""
    return (-nbits) % BITS_PER_CELL


def map_to_states(bits: Sequence[int], table: MappingTable = DIRECT_MAPPING) -> list[CellState]:
    padded = list(bits) + [0] * pad_length(len(bits))
    states = []
    for i in range(0, len(padded), BITS_PER_CELL):
        value = (padded[i] << 2) | (padded[i + 1] << 1) | padded[i + 2]
        states.append(table.forward[value])
    return states


def unmap_states(states: Sequence[CellState], table: MappingTable = DIRECT_MAPPING) -> list[int]:
    bits: list[int] = []
    for state in states:
        value = table.inverse_value(state)
        bits.extend(((value >> 2) & 1, (value >> 1) & 1, value & 1))
    return bits


def unmap_raw_bits(raw_bits: Sequence[int], table: MappingTable = DIRECT_MAPPING) -> list[int]:
    """Undo the mapping table on raw level-encoded read bits. Identity for the
    direct table."""
    out: list[int] = []
    for i in range(0, len(raw_bits) - len(raw_bits) % BITS_PER_CELL, BITS_PER_CELL):
        value = (raw_bits[i] << 2) | (raw_bits[i + 1] << 1) | raw_bits[i + 2]
        out.extend(
            ((table.inverse_value(CellState(value)) >> (2 - j)) & 1 for j in range(3)))
    return out


# -- error correction model ---------------------------------------------------


@dataclass(frozen=True)
class EccConfig:
    """Per-sector correction capability t: reads within Hamming distance t of
    the stored codeword decode to it, anything farther fails."""

    sector_bits: int = 64
    t: int = 8

    def __post_init__(self):
        if self.sector_bits <= 0:
            raise ParameterError("sector_bits must be positive")
        if not 0 <= self.t < self.sector_bits / 2:
            raise ParameterError("t must satisfy 0 <= t < sector_bits/2")


@dataclass(frozen=True)
class DecodeResult:
    data: tuple
    corrections_used: int


def hamming_distance(a: Sequence[int], b: Sequence[int]) -> int:
    if len(a) != len(b):
        raise LengthMismatch(f"{len(a)} vs {len(b)} bits")
    return sum(x ^ y for x, y in zip(a, b))


def ecc_decode(read_bits: Sequence[int], reference_codeword: Sequence[int],
               config: EccConfig = EccConfig()) -> DecodeResult:
    if len(read_bits) != config.sector_bits or len(reference_codeword) != config.sector_bits:
        raise LengthMismatch("codeword length does not match sector_bits")
    distance = hamming_distance(read_bits, reference_codeword)
    if distance > config.t:
        raise DecodeFailure(distance, config.t)
    return DecodeResult(data=tuple(reference_codeword), corrections_used=distance)


# -- page image assembly -------------------------------------------------------


@dataclass(frozen=True)
class CodecParams:
    """Everything the translation layer and the scanners need to move between
    host data and page images."""

    scrambler: ScramblerConfig = ScramblerConfig()
    mapping: MappingTable = DIRECT_MAPPING
    ecc: EccConfig = EccConfig()


def _level_chi_square(bits: Sequence[int]) -> float:
    counts = [0] * LEVELS
    for i in range(0, len(bits) - len(bits) % BITS_PER_CELL, BITS_PER_CELL):
        counts[(bits[i] << 2) | (bits[i + 1] << 1) | bits[i + 2]] += 1
    expected = sum(counts) / LEVELS
    return sum((c - expected) ** 2 / expected for c in counts)


def assemble_page_image(data_bits: Sequence[int], physical_page_index: int,
                        geometry: Geometry, params: CodecParams) -> list[int]:
    """Build the full page bit image for a write: payload scrambled with the
    flatter of the two keystream phases, the chosen phase recorded in the first
    spare bit, remaining spare bits zero. With no spare bit the base phase is
    used unconditionally."""
    payload_bits = geometry.payload_bits
    if len(data_bits) > payload_bits:
        raise LengthMismatch(f"{len(data_bits)} data bits exceed page payload {payload_bits}")
    padded = list(data_bits) + [0] * (payload_bits - len(data_bits))

    selectors = (0, 1) if geometry.spare_bits >= 1 else (0,)
    best_image: Optional[list[int]] = None
    best_stat = None
    for selector in selectors:
        ks = params.scrambler.keystream(physical_page_index, payload_bits, selector)
        image = [b ^ k for b, k in zip(padded, ks)]
        if geometry.spare_bits >= 1:
            image.append(selector)
            image.extend([0] * (geometry.spare_bits - 1))
        stat = _level_chi_square(image)
        if best_stat is None or stat < best_stat:
            best_stat, best_image = stat, image
    assert best_image is not None
    return best_image


def page_image_selector(page_image: Sequence[int], geometry: Geometry) -> int:
    return page_image[geometry.payload_bits] if geometry.spare_bits >= 1 else 0


def scrambled_payload(data_bits: Sequence[int], physical_page_index: int,
                      selector: int, geometry: Geometry,
                      params: CodecParams) -> list[int]:
    """Payload region of the page image for given data under a known phase.
    Used to rebuild verification references without re-running phase selection."""
    payload_bits = geometry.payload_bits
    if len(data_bits) > payload_bits:
        raise LengthMismatch(f"{len(data_bits)} data bits exceed page payload {payload_bits}")
    padded = list(data_bits) + [0] * (payload_bits - len(data_bits))
    ks = params.scrambler.keystream(physical_page_index, payload_bits, selector)
    return [b ^ k for b, k in zip(padded, ks)]


def extract_page_data(page_image: Sequence[int], physical_page_index: int,
                      geometry: Geometry, params: CodecParams) -> list[int]:
    """Inverse of assemble_page_image: recover the payload data bits from a page
    bit image (mapping already undone)."""
    selector = page_image_selector(page_image, geometry)
    ks = params.scrambler.keystream(physical_page_index, geometry.payload_bits, selector)
    return [b ^ k for b, k in zip(page_image[:geometry.payload_bits], ks)]
