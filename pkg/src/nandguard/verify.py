"""Real-time verification of secure deletion.

Two methods, both read-only against the array:

* XOR cell counting: sense a sector, XOR it with the reference personal
  data, and count the ones. A count at or below the correction capability t
  means the data is still effectively present (an ECC would recover it), so
  the deletion verdict is FAIL; a count strictly above t is a PASS.

* Distribution check: normally programmed (scrambled) pages show near-
  uniform cell-level counts, while deleted pages are heavily skewed. A
  chi-square statistic of the level histogram above the threshold therefore
  signals successful deletion without ever touching the reference data.

The whole-device scan turns the sector comparison into an anti-forensic
sweep across every physical page, managed or not.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from . import codec, sanitize as sanitize_mod
from .codec import CodecParams, EccConfig
from .errors import ExhaustedRounds, LengthMismatch, ParameterError
from .flash_core import (CellState, Device, PageAddress, state_to_bits, LEVELS)
from .sanitize import SanitizeMetrics, SanitizeScheme

# 95th percentile of a chi-square with 7 degrees of freedom
DEFAULT_UNIFORMITY_THRESHOLD = 14.07


class Verdict(Enum):
    PASS = "PASS"
    FAIL = "FAIL"


class VerifyMethod(Enum):
    XOR_COUNT = "xor_count"
    DISTRIBUTION = "distribution"


@dataclass
class SectorVerdict:
    sector_index: int
    ones_count: int
    threshold: int
    verdict: Verdict

    def to_dict(self) -> dict:
        return {"sector": self.sector_index, "ones_count": self.ones_count,
                "threshold": self.threshold, "verdict": self.verdict.value}


@dataclass
class VerificationReport:
    page_address: PageAddress
    method: VerifyMethod
    per_sector: list[SectorVerdict] = field(default_factory=list)
    overall: Verdict = Verdict.FAIL
    histogram: Optional[dict[CellState, int]] = None
    chi_square: Optional[float] = None

    def to_dict(self) -> dict:
        out = {
            "block": self.page_address.block,
            "page": self.page_address.page,
            "method": self.method.value,
            "overall": self.overall.value,
            "sectors": [s.to_dict() for s in self.per_sector],
        }
        if self.chi_square is not None:
            out["chi_square"] = round(self.chi_square, 6)
        if self.histogram is not None:
            out["histogram"] = {st.name: n for st, n in sorted(self.histogram.items())}
        return out


def xor_verify_sector(device: Device, addr: PageAddress, sector_index: int,
                      reference_bits: Sequence[int],
                      ecc_config: EccConfig = EccConfig()) -> SectorVerdict:
    """PASS iff the mismatch count strictly exceeds t; a count of exactly t is
    still correctable, hence still a deletion failure."""
    result = device.sense_and_compare(addr, sector_index, reference_bits)
    verdict = Verdict.PASS if result.ones_count > ecc_config.t else Verdict.FAIL
    return SectorVerdict(sector_index=sector_index, ones_count=result.ones_count,
                         threshold=ecc_config.t, verdict=verdict)


def xor_verify_page(device: Device, addr: PageAddress,
                    reference_page_bits: Sequence[int],
                    ecc_config: EccConfig = EccConfig()) -> VerificationReport:
    """Run the sector comparison across the whole sector grid; the page passes
    only if every sector does."""
    geom = device.geometry
    if len(reference_page_bits) != geom.payload_bits:
        raise LengthMismatch(
            f"page reference is {len(reference_page_bits)} bits, expected {geom.payload_bits}")
    sectors = []
    for s in range(geom.sectors_per_page):
        lo = s * geom.bits_per_sector
        ref = reference_page_bits[lo:lo + geom.bits_per_sector]
        sectors.append(xor_verify_sector(device, addr, s, ref, ecc_config))
    overall = (Verdict.PASS if all(v.verdict is Verdict.PASS for v in sectors)
               else Verdict.FAIL)
    return VerificationReport(page_address=addr, method=VerifyMethod.XOR_COUNT,
                              per_sector=sectors, overall=overall)


def level_histogram(device: Device, addr: PageAddress) -> list[int]:
    """Cell counts over the eight levels, erased cells counted at the lowest."""
    counts = [0] * LEVELS
    for state, n in device.cell_count_histogram(addr).items():
        counts[max(int(state), 0)] += n
    return counts


def uniformity_statistic(counts: Sequence[int]) -> float:
    expected = sum(counts) / len(counts)
    return sum((c - expected) ** 2 / expected for c in counts)


def distribution_verify(device: Device, addr: PageAddress,
                        uniformity_threshold: float = DEFAULT_UNIFORMITY_THRESHOLD
                        ) -> VerificationReport:
    """Reference-free check: a statistic above the threshold means the level
    histogram is too skewed to be normally programmed data, i.e. deleted."""
    counts = level_histogram(device, addr)
    stat = uniformity_statistic(counts)
    overall = Verdict.PASS if stat > uniformity_threshold else Verdict.FAIL
    return VerificationReport(page_address=addr, method=VerifyMethod.DISTRIBUTION,
                              overall=overall,
                              histogram=device.cell_count_histogram(addr),
                              chi_square=stat)


# -- references and scanning ----------------------------------------------------


def _target_chunks(text: str, sector_bits: int) -> list[list[int]]:
    bits = codec.encode_text(text)
    if not bits:
        raise ParameterError("target text is empty")
    pad = (-len(bits)) % sector_bits
    bits = bits + [0] * pad
    return [bits[i:i + sector_bits] for i in range(0, len(bits), sector_bits)]


def build_page_reference(device: Device, addr: PageAddress, text: str,
                         params: CodecParams) -> list[int]:
    """Raw-domain reference bits for the page's sector grid, assuming the page
    was written with this text at the start of its payload. The keystream phase
    is taken from the page's own spare bit as currently sensed."""
    geom = device.geometry
    data = codec.encode_text(text)
    if len(data) > geom.payload_bits:
        raise LengthMismatch("target exceeds the page payload")
    raw = device.read_page(addr)
    image = codec.unmap_raw_bits(raw, params.mapping)
    selector = codec.page_image_selector(image, geom)
    payload = codec.scrambled_payload(data, geom.page_index(addr), selector, geom, params)
    ref_image = payload + [selector] + [0] * (geom.spare_bits - 1) \
        if geom.spare_bits >= 1 else payload
    ref_raw: list[int] = []
    for st in codec.map_to_states(ref_image, params.mapping):
        ref_raw.extend(state_to_bits(st))
    return ref_raw[:geom.payload_bits]


@dataclass
class ScanHit:
    block: int
    page: int
    min_distance: int
    sectors: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"block": self.block, "page": self.page,
                "min_distance": self.min_distance, "sectors": self.sectors}


def antiforensic_scan(device: Device, personal_data_text: str,
                      params: CodecParams) -> list[ScanHit]:
    """Search every physical page, managed or not, for sector-aligned copies of
    the target within the correction radius. An empty result proves no
    recoverable copy exists on the die."""
    geom = device.geometry
    chunks = _target_chunks(personal_data_text, geom.bits_per_sector)
    t = params.ecc.t
    hits: list[ScanHit] = []
    for addr in device.all_addresses():
        raw = device.read_page(addr)
        image = codec.unmap_raw_bits(raw, params.mapping)
        data = codec.extract_page_data(image, geom.page_index(addr), geom, params)
        best = None
        matched: list[int] = []
        for s in range(geom.sectors_per_page):
            lo = s * geom.bits_per_sector
            sector = data[lo:lo + geom.bits_per_sector]
            d = min(codec.hamming_distance(sector, chunk) for chunk in chunks)
            if best is None or d < best:
                best = d
            if d <= t:
                matched.append(s)
        if matched:
            hits.append(ScanHit(block=addr.block, page=addr.page,
                                min_distance=best, sectors=matched))
    return hits


# -- sanitize-verify loop ---------------------------------------------------------


@dataclass
class RetryRound:
    scheme: SanitizeScheme
    metrics: SanitizeMetrics
    report: VerificationReport


@dataclass
class RetryOutcome:
    final_report: VerificationReport
    rounds_used: int
    history: list[RetryRound]


def verify_and_retry(device: Device, addr: PageAddress,
                     reference_page_bits: Sequence[int],
                     scheme_sequence: Sequence[SanitizeScheme],
                     ecc_config: EccConfig = EccConfig(),
                     max_rounds: int = 3,
                     rng_seed: int = 0,
                     pulses: Optional[int] = None) -> RetryOutcome:
    """Apply schemes in order (cycling if needed), verifying after each, until
    the page passes. A page still failing after max_rounds raises, carrying the
    full round history."""
    if not scheme_sequence:
        raise ParameterError("scheme_sequence must not be empty")
    if max_rounds < 1:
        raise ParameterError("max_rounds must be >= 1")
    history: list[RetryRound] = []
    for round_no in range(1, max_rounds + 1):
        scheme = scheme_sequence[(round_no - 1) % len(scheme_sequence)]
        metrics = sanitize_mod.sanitize(device, addr, scheme,
                                        rng_seed=rng_seed + round_no, pulses=pulses)
        report = xor_verify_page(device, addr, reference_page_bits, ecc_config)
        history.append(RetryRound(scheme=scheme, metrics=metrics, report=report))
        if report.overall is Verdict.PASS:
            return RetryOutcome(final_report=report, rounds_used=round_no,
                                history=history)
    raise ExhaustedRounds(max_rounds, history)
