"""Command-line front end.

Exit codes: 0 success, 1 domain failure (verification FAIL, incomplete
de-identification, residual data found, unmapped reads and the like),
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from typing import Optional

from . import forensics, harness, image, sanitize as sanitize_mod, verify as verify_mod
from .codec import CodecParams, EccConfig, ScramblerConfig
from .errors import FlashError, ParameterError
from .flash_core import Device, Geometry, PageAddress
from .forensics import AttackerContext
from .ftl import FlashTranslationLayer, FtlConfig, TrimMode, TrimPolicy
from .harness import (DeidRecord, DeidTechnique, PipelineConfig, RunOutcome,
                      benchmark_schemes, benchmark_table, deid_run, report_json,
                      store_record)
from .sanitize import SanitizeScheme
from .verify import Verdict, VerifyMethod

SCHEME_NAMES = {s.value: s for s in SanitizeScheme}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nandguard",
        description="NAND flash simulator with secure-deletion verification")
    parser.add_argument("--image", help="flash image file")
    parser.add_argument("--seed", type=int, default=None,
                        help="scrambler seed base (defaults to 42 or the config value)")
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--json-out", help="write the JSON report to this file")
    parser.add_argument("--no-timestamps", action="store_true",
                        help="omit wall-clock fields for byte-stable reports")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("create", help="create a fresh flash image")
    p.add_argument("--blocks", type=int, default=16)
    p.add_argument("--pages", type=int, default=9)
    p.add_argument("--cells", type=int, default=171)
    p.add_argument("--sectors", type=int, default=8)
    p.add_argument("--sector-bits", type=int, default=64)
    p.add_argument("--endurance", type=int, default=1000)
    p.add_argument("--op-fraction", type=float, default=0.25)

    p = sub.add_parser("write", help="write text to a logical page")
    p.add_argument("--lpn", type=int, required=True)
    p.add_argument("--text", required=True)

    p = sub.add_parser("read", help="read text back from a logical page")
    p.add_argument("--lpn", type=int, required=True)

    p = sub.add_parser("trim", help="drop logical pages")
    p.add_argument("--lpn", type=int, nargs="+", required=True)
    p.add_argument("--mode", choices=["deferred", "immediate"], default=None)

    sub.add_parser("gc", help="run garbage collection")

    p = sub.add_parser("sanitize", help="securely delete one physical page")
    p.add_argument("--block", type=int, required=True)
    p.add_argument("--page", type=int, required=True)
    p.add_argument("--scheme", choices=sorted(SCHEME_NAMES), required=True)
    p.add_argument("--pulses", type=int, default=None)
    p.add_argument("--rng-seed", type=int, default=0)

    p = sub.add_parser("verify", help="verify secure deletion of one page")
    p.add_argument("--block", type=int, required=True)
    p.add_argument("--page", type=int, required=True)
    p.add_argument("--method", choices=["xor_count", "distribution"], default="xor_count")
    p.add_argument("--target", help="personal data text (required for xor_count)")
    p.add_argument("--threshold", type=float,
                   default=verify_mod.DEFAULT_UNIFORMITY_THRESHOLD)
    p.add_argument("--t", type=int, default=None,
                   help="override the pass/fail count threshold")

    p = sub.add_parser("scan", help="anti-forensic scan of all physical blocks")
    p.add_argument("--target", required=True)

    p = sub.add_parser("recover", help="attacker-view recovery from the invalid area")
    p.add_argument("--target", required=True)
    p.add_argument("--t", type=int, default=None)

    p = sub.add_parser("deid", help="de-identify a record and erase the originals")
    p.add_argument("--record", required=True, help="record JSON file")
    p.add_argument("--technique", choices=["mask", "pseudonym"], default=None)
    p.add_argument("--schemes", nargs="*", default=None,
                   help=f"sanitize schemes in retry order ({', '.join(sorted(SCHEME_NAMES))})")
    p.add_argument("--max-rounds", type=int, default=None)
    p.add_argument("--skip-sanitize", action="store_true",
                   help="demonstration mode: rewrite only, leave residual data")

    p = sub.add_parser("bench", help="compare sanitize scheme costs")
    p.add_argument("--pages", type=int, default=100)
    p.add_argument("--schemes", nargs="*", default=None)
    p.add_argument("--pulses", type=int, default=1)
    p.add_argument("--data-seed", type=int, default=0)

    sub.add_parser("report", help="summarize an image")
    return parser


def _load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _codec_params(args, cfg: dict) -> CodecParams:
    scfg = cfg.get("scrambler", {})
    seed_base = args.seed if args.seed is not None else scfg.get("seed_base", 0x2A)
    taps = frozenset(scfg.get("taps", sorted(ScramblerConfig().taps)))
    ecfg = cfg.get("ecc", {})
    return CodecParams(
        scrambler=ScramblerConfig(taps=taps, seed_base=seed_base),
        ecc=EccConfig(sector_bits=ecfg.get("sector_bits", 64), t=ecfg.get("t", 8)),
    )


def _pipeline_config(args, cfg: dict) -> PipelineConfig:
    pcfg = cfg.get("pipeline", {})
    technique = args.technique or pcfg.get("technique", "mask")
    schemes = args.schemes if args.schemes is not None else pcfg.get("schemes", ["scrub"])
    unknown = [s for s in schemes if s not in SCHEME_NAMES]
    if unknown:
        raise ParameterError(f"unknown scheme(s): {unknown}")
    return PipelineConfig(
        deid_technique=DeidTechnique(technique),
        scheme_sequence=tuple(SCHEME_NAMES[s] for s in schemes),
        verify_method=VerifyMethod(pcfg.get("verify_method", "xor_count")),
        max_rounds=args.max_rounds if args.max_rounds is not None
        else pcfg.get("max_rounds", 3),
        trim_mode=TrimMode(pcfg.get("trim_mode", "deferred")),
        sanitize_seed=pcfg.get("sanitize_seed", 0),
        pseudonym_key=pcfg.get("pseudonym_key", "nandguard"),
        skip_sanitize=getattr(args, "skip_sanitize", False)
        or pcfg.get("skip_sanitize", False),
    )


def _require_image(args) -> str:
    if not args.image:
        raise ParameterError("--image is required for this command")
    return args.image


def _emit(args, payload: dict) -> None:
    if not args.no_timestamps:
        payload = dict(payload)
        payload["generated_at"] = time.time()
    text = report_json(payload)
    print(text)
    if args.json_out:
        with open(args.json_out, "w") as fh:
            fh.write(text + "\n")


def cli_main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        cfg = _load_config(args.config)
        params = _codec_params(args, cfg)
        return _dispatch(args, cfg, params)
    except (ParameterError, json.JSONDecodeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FlashError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def _dispatch(args, cfg: dict, params: CodecParams) -> int:
    if args.command == "create":
        geometry = Geometry(blocks_per_device=args.blocks, pages_per_block=args.pages,
                            cells_per_page=args.cells, sectors_per_page=args.sectors,
                            bits_per_sector=args.sector_bits)
        device = Device(geometry, endurance_limit=args.endurance)
        fcfg = cfg.get("ftl", {})
        ftl = FlashTranslationLayer(device, params=params, config=FtlConfig(
            op_fraction=args.op_fraction,
            wear_defer_erase=fcfg.get("wear_defer_erase", False),
            trim_pressure=fcfg.get("trim_pressure", 0.9)))
        image.image_save(_require_image(args), device, ftl)
        _emit(args, {"command": "create", "blocks": args.blocks,
                     "pages": args.pages, "cells": args.cells})
        return 0

    device, ftl = image.image_load(_require_image(args), params=params) \
        if args.command != "bench" else (None, None)

    if args.command == "write":
        addr = ftl.write_text(args.lpn, args.text)
        image.image_save(args.image, device, ftl)
        _emit(args, {"command": "write", "lpn": args.lpn,
                     "block": addr.block, "page": addr.page})
        return 0

    if args.command == "read":
        text = ftl.read_text(args.lpn)
        _emit(args, {"command": "read", "lpn": args.lpn, "text": text})
        return 0

    if args.command == "trim":
        mode = TrimMode(args.mode) if args.mode else None
        report = ftl.trim(args.lpn, TrimPolicy(mode) if mode else None)
        image.image_save(args.image, device, ftl)
        _emit(args, {"command": "trim", "mode": report.mode.value,
                     "invalidated": [[a.block, a.page] for a in report.invalidated],
                     "erased_blocks": report.erased_blocks,
                     "extra_pe": report.extra_pe})
        return 0

    if args.command == "gc":
        from .errors import NothingToCollect
        try:
            report = ftl.garbage_collect()
            payload = {"command": "gc", "victims": report.victims,
                       "moved_pages": report.moved_pages,
                       "retired": {str(b): r.value for b, r in report.retired.items()}}
        except NothingToCollect:
            payload = {"command": "gc", "victims": [], "moved_pages": 0, "retired": {}}
        image.image_save(args.image, device, ftl)
        _emit(args, payload)
        return 0

    if args.command == "sanitize":
        addr = PageAddress(args.block, args.page)
        metrics = sanitize_mod.sanitize(device, addr, SCHEME_NAMES[args.scheme],
                                        rng_seed=args.rng_seed, pulses=args.pulses)
        ftl.forget_mapping_for(addr)
        image.image_save(args.image, device, ftl)
        _emit(args, {"command": "sanitize", "scheme": metrics.scheme.value,
                     "generated_bits": metrics.generated_bits,
                     "wear_delta": metrics.wear_delta,
                     "disturb_events": metrics.disturb_events,
                     "duration_units": metrics.duration_units})
        return 0

    if args.command == "verify":
        addr = PageAddress(args.block, args.page)
        if args.method == "distribution":
            report = verify_mod.distribution_verify(device, addr, args.threshold)
        else:
            if not args.target:
                raise ParameterError("--target is required for xor_count verification")
            ecc = params.ecc if args.t is None else EccConfig(params.ecc.sector_bits, args.t)
            reference = verify_mod.build_page_reference(device, addr, args.target, params)
            report = verify_mod.xor_verify_page(device, addr, reference, ecc)
        _emit(args, {"command": "verify", **report.to_dict()})
        return 0 if report.overall is Verdict.PASS else 1

    if args.command == "scan":
        hits = verify_mod.antiforensic_scan(device, args.target, params)
        _emit(args, {"command": "scan", "target_length": len(args.target),
                     "hits": [h.to_dict() for h in hits]})
        return 0 if not hits else 1

    if args.command == "recover":
        t = args.t if args.t is not None else params.ecc.t
        context = AttackerContext(ecc_capability_known=t)
        hits = forensics.recover(device, args.target, context, ftl, params)
        _emit(args, {"command": "recover",
                     "hits": [h.to_dict() for h in hits]})
        return 0

    if args.command == "deid":
        with open(args.record) as fh:
            raw = json.load(fh)
        record = DeidRecord(id=raw["id"], fields=raw["fields"],
                            sensitive_fields=frozenset(raw["sensitive"]))
        pipeline = _pipeline_config(args, cfg)
        lpns = store_record(ftl, record)
        report = deid_run(ftl, record, pipeline, lpns)
        image.image_save(args.image, device, ftl)
        _emit(args, {"command": "deid",
                     **report.to_dict(include_timestamps=not args.no_timestamps)})
        return 0 if report.outcome is RunOutcome.DEID_COMPLETE else 1

    if args.command == "bench":
        schemes = tuple(SanitizeScheme)
        if args.schemes:
            unknown = [s for s in args.schemes if s not in SCHEME_NAMES]
            if unknown:
                raise ParameterError(f"unknown scheme(s): {unknown}")
            schemes = tuple(SCHEME_NAMES[s] for s in args.schemes)
        rows = benchmark_schemes(page_count=args.pages, schemes=schemes,
                                 params=params, data_seed=args.data_seed,
                                 pulses=args.pulses)
        print(benchmark_table(rows), file=sys.stderr)
        _emit(args, {"command": "bench", "rows": [r.to_dict() for r in rows]})
        return 0

    if args.command == "report":
        g = device.geometry
        from .flash_core import PageValidity
        validity = {v.name: 0 for v in PageValidity}
        for a in device.all_addresses():
            validity[device.page_at(a).validity.name] += 1
        _emit(args, {
            "command": "report",
            "geometry": {"blocks": g.blocks_per_device, "pages": g.pages_per_block,
                         "cells": g.cells_per_page, "sectors": g.sectors_per_page,
                         "sector_bits": g.bits_per_sector},
            "endurance_limit": device.endurance_limit,
            "pages": validity,
            "mapped_lpns": len(ftl.map),
            "unmanaged": {str(b): r.value for b, r in sorted(ftl.unmanaged.items())},
            "pe_cycles": [blk.pe_cycles for blk in device.blocks],
            "bad_blocks": [i for i, blk in enumerate(device.blocks) if blk.bad],
            "trim_queue": len(ftl.trim_queue),
            "state_hash": image.state_hash(device),
        })
        return 0

    raise ParameterError(f"unhandled command {args.command}")


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
