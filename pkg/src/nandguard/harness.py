"""De-identification pipeline and the scheme cost benchmark.

A de-identification run reads each sensitive value, rewrites it transformed
(out of place, so the original physically survives), then hunts down every
residual physical copy with the anti-forensic scan and destroys it with the
configured sanitize schemes, verifying after every application. The run only
counts as complete when the final whole-device scan comes back empty for
every sensitive value.
"""

from __future__ import annotations

import hashlib
import json
import random
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from . import codec, sanitize as sanitize_mod, verify as verify_mod
from .codec import CodecParams
from .errors import ExhaustedRounds, ParameterError
from .flash_core import Device, Geometry, PageAddress, ProgramMode
from .ftl import FlashTranslationLayer, TrimMode
from .sanitize import SanitizeMetrics, SanitizeScheme
from .verify import (ScanHit, Verdict, VerificationReport, VerifyMethod,
                     antiforensic_scan, build_page_reference, distribution_verify,
                     verify_and_retry, xor_verify_page)


class DeidTechnique(Enum):
    MASK = "mask"
    PSEUDONYM = "pseudonym"


class RunOutcome(Enum):
    DEID_COMPLETE = "DEID_COMPLETE"
    DEID_INCOMPLETE = "DEID_INCOMPLETE"


@dataclass(frozen=True)
class DeidRecord:
    id: str
    fields: dict[str, str]
    sensitive_fields: frozenset[str]

    def __post_init__(self):
        object.__setattr__(self, "sensitive_fields", frozenset(self.sensitive_fields))
        unknown = self.sensitive_fields - set(self.fields)
        if unknown:
            raise ParameterError(f"sensitive fields not in record: {sorted(unknown)}")


@dataclass(frozen=True)
class PipelineConfig:
    deid_technique: DeidTechnique = DeidTechnique.MASK
    scheme_sequence: tuple = (SanitizeScheme.SCRUB,)
    verify_method: VerifyMethod = VerifyMethod.XOR_COUNT
    max_rounds: int = 3
    trim_mode: TrimMode = TrimMode.DEFERRED
    sanitize_seed: int = 0
    pseudonym_key: str = "nandguard"
    skip_sanitize: bool = False  # exposure demo: rewrite only, leave residuals

    def __post_init__(self):
        if not self.scheme_sequence:
            raise ParameterError("scheme_sequence must not be empty")
        if self.max_rounds < 1:
            raise ParameterError("max_rounds must be >= 1")


def mask_value(value: str) -> str:
    """Keep the first character, star out the rest."""
    return value[:1] + "*" * (len(value) - 1)


def pseudonym_value(value: str, key: str) -> str:
    """Stable keyed substitution of the same length (minimum one character)."""
    digest = hashlib.sha256(f"{key}:{value}".encode()).hexdigest().upper()
    length = max(len(value), 1)
    out = (digest * (length // len(digest) + 1))[:length]
    return out


def apply_technique(value: str, config: PipelineConfig) -> str:
    if config.deid_technique is DeidTechnique.MASK:
        return mask_value(value)
    return pseudonym_value(value, config.pseudonym_key)


@dataclass
class Step:
    name: str
    detail: dict
    at: Optional[float] = None

    def to_dict(self, include_timestamps: bool) -> dict:
        out = {"name": self.name, "detail": self.detail}
        if include_timestamps and self.at is not None:
            out["at"] = self.at
        return out


@dataclass
class RunReport:
    record_id: str
    outcome: RunOutcome = RunOutcome.DEID_INCOMPLETE
    steps: list[Step] = field(default_factory=list)
    sanitize_metrics: list[SanitizeMetrics] = field(default_factory=list)
    verification: list[VerificationReport] = field(default_factory=list)
    residual_hits: dict[str, list[ScanHit]] = field(default_factory=dict)
    final_scan: dict[str, list[ScanHit]] = field(default_factory=dict)
    failed_locations: list[PageAddress] = field(default_factory=list)

    def to_dict(self, include_timestamps: bool = True) -> dict:
        return {
            "record_id": self.record_id,
            "outcome": self.outcome.value,
            "steps": [s.to_dict(include_timestamps) for s in self.steps],
            "sanitize_metrics": [
                {"scheme": m.scheme.value, "generated_bits": m.generated_bits,
                 "wear_delta": m.wear_delta, "disturb_events": m.disturb_events,
                 "duration_units": m.duration_units}
                for m in self.sanitize_metrics],
            "verification": [r.to_dict() for r in self.verification],
            "residual_hits": {f: [h.to_dict() for h in hs]
                              for f, hs in sorted(self.residual_hits.items())},
            "final_scan": {f: [h.to_dict() for h in hs]
                           for f, hs in sorted(self.final_scan.items())},
            "failed_locations": [[a.block, a.page] for a in self.failed_locations],
        }


def store_record(ftl: FlashTranslationLayer, record: DeidRecord,
                 lpn_base: Optional[int] = None) -> dict[str, int]:
    """Write every field value to its own logical page; returns field -> lpn."""
    if lpn_base is None:
        lpn_base = max(ftl.map) + 1 if ftl.map else 0
    lpns: dict[str, int] = {}
    for offset, name in enumerate(sorted(record.fields)):
        lpn = lpn_base + offset
        ftl.write_text(lpn, record.fields[name])
        lpns[name] = lpn
    return lpns


def _sanitize_location(ftl: FlashTranslationLayer, addr: PageAddress, original: str,
                       config: PipelineConfig, report: RunReport) -> bool:
    """Destroy one residual copy, verifying after each scheme application.
    Returns True when the location finally verifies as deleted."""
    device = ftl.device
    params = ftl.params
    displaced = ftl.forget_mapping_for(addr)
    if displaced is not None:
        report.steps.append(Step("unmap_live_copy", {
            "lpn": displaced, "block": addr.block, "page": addr.page}, time.time()))
    reference = build_page_reference(device, addr, original, params)

    if config.verify_method is VerifyMethod.XOR_COUNT:
        try:
            outcome = verify_and_retry(device, addr, reference, config.scheme_sequence,
                                       params.ecc, config.max_rounds,
                                       rng_seed=config.sanitize_seed)
        except ExhaustedRounds as exc:
            for rnd in exc.history:
                report.sanitize_metrics.append(rnd.metrics)
                report.verification.append(rnd.report)
            report.failed_locations.append(addr)
            return False
        for rnd in outcome.history:
            report.sanitize_metrics.append(rnd.metrics)
            report.verification.append(rnd.report)
        return True

    # distribution method: same loop, verdict from the level histogram alone
    for round_no in range(1, config.max_rounds + 1):
        scheme = config.scheme_sequence[(round_no - 1) % len(config.scheme_sequence)]
        metrics = sanitize_mod.sanitize(device, addr, scheme,
                                        rng_seed=config.sanitize_seed + round_no)
        result = distribution_verify(device, addr)
        report.sanitize_metrics.append(metrics)
        report.verification.append(result)
        if result.overall is Verdict.PASS:
            return True
    report.failed_locations.append(addr)
    return False


def deid_run(ftl: FlashTranslationLayer, record: DeidRecord, config: PipelineConfig,
             lpns: dict[str, int]) -> RunReport:
    """Execute the full pipeline for one record whose values are already stored
    at the given logical pages."""
    missing = [f for f in record.sensitive_fields if f not in lpns]
    if missing:
        raise ParameterError(f"no stored location for sensitive field(s) {missing}")
    device = ftl.device
    report = RunReport(record_id=record.id)
    originals: dict[str, str] = {}

    for name in sorted(record.sensitive_fields):
        lpn = lpns[name]
        original = ftl.read_text(lpn)
        originals[name] = original
        transformed = apply_technique(original, config)
        ftl.write_text(lpn, transformed)
        report.steps.append(Step("deidentify", {
            "field": name, "lpn": lpn, "technique": config.deid_technique.value},
            time.time()))

    all_clean = True
    for name in sorted(record.sensitive_fields):
        hits = antiforensic_scan(device, originals[name], ftl.params)
        report.residual_hits[name] = hits
        report.steps.append(Step("locate_residuals", {
            "field": name, "hits": len(hits)}, time.time()))
        if config.skip_sanitize:
            continue
        for hit in hits:
            ok = _sanitize_location(ftl, PageAddress(hit.block, hit.page),
                                    originals[name], config, report)
            all_clean = all_clean and ok

    for name in sorted(record.sensitive_fields):
        final = antiforensic_scan(device, originals[name], ftl.params)
        report.final_scan[name] = final
        report.steps.append(Step("final_scan", {
            "field": name, "hits": len(final)}, time.time()))
        if final:
            all_clean = False

    if config.skip_sanitize:
        all_clean = False
    report.outcome = (RunOutcome.DEID_COMPLETE if all_clean
                      else RunOutcome.DEID_INCOMPLETE)
    return report


# -- scheme benchmark -------------------------------------------------------------


@dataclass
class SchemeBenchmark:
    scheme: SanitizeScheme
    pages: int
    generated_bits: int = 0
    wear_delta: int = 0
    disturb_events: int = 0
    duration_units: int = 0
    verified_pass: int = 0

    def to_dict(self) -> dict:
        return {"scheme": self.scheme.value, "pages": self.pages,
                "generated_bits": self.generated_bits, "wear_delta": self.wear_delta,
                "disturb_events": self.disturb_events,
                "duration_units": self.duration_units,
                "verified_pass": self.verified_pass}


def benchmark_schemes(geometry: Geometry = Geometry(),
                      page_count: int = 100,
                      schemes: Sequence[SanitizeScheme] = tuple(SanitizeScheme),
                      params: CodecParams = CodecParams(),
                      data_seed: int = 0,
                      pulses: int = 1) -> list[SchemeBenchmark]:
    """Run the identical seeded sanitize workload once per scheme on identical
    device contents and report the summed cost metrics, plus how many pages the
    XOR verification certified as deleted."""
    if page_count > geometry.total_pages:
        raise ParameterError(f"workload needs {page_count} pages, device has "
                             f"{geometry.total_pages}")
    results = []
    for scheme in schemes:
        device = Device(geometry)
        rng = random.Random(data_seed)
        targets: list[tuple[PageAddress, list[int]]] = []
        for addr in device.all_addresses():
            if len(targets) == page_count:
                break
            data = [rng.getrandbits(1) for _ in range(geometry.payload_bits)]
            page_index = geometry.page_index(addr)
            img = codec.assemble_page_image(data, page_index, geometry, params)
            device.program_page(addr, codec.map_to_states(img, params.mapping),
                                ProgramMode.FULL)
            reference = device.read_page(addr)[:geometry.payload_bits]
            targets.append((addr, reference))

        row = SchemeBenchmark(scheme=scheme, pages=page_count)
        for i, (addr, reference) in enumerate(targets):
            metrics = sanitize_mod.sanitize(device, addr, scheme,
                                            rng_seed=data_seed + i, pulses=pulses)
            row.generated_bits += metrics.generated_bits
            row.wear_delta += metrics.wear_delta
            row.disturb_events += metrics.disturb_events
            row.duration_units += metrics.duration_units
            check = xor_verify_page(device, addr, reference, params.ecc)
            if check.overall is Verdict.PASS:
                row.verified_pass += 1
        results.append(row)
    return results


def benchmark_table(rows: Sequence[SchemeBenchmark]) -> str:
    header = f"{'scheme':<18} {'gen_bits':>10} {'wear':>6} {'disturb':>8} {'duration':>9} {'verified':>9}"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(f"{r.scheme.value:<18} {r.generated_bits:>10} {r.wear_delta:>6} "
                     f"{r.disturb_events:>8} {r.duration_units:>9} "
                     f"{r.verified_pass:>8}/{r.pages}")
    return "\n".join(lines)


def report_json(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, indent=2)
