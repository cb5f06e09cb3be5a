import pytest

import nandguard.sanitize as san
from nandguard import codec, image, verify
from nandguard.codec import CodecParams, EccConfig
from nandguard.errors import ExhaustedRounds, LengthMismatch, ParameterError
from nandguard.flash_core import CellState, Device, Geometry, PageAddress
from nandguard.ftl import FlashTranslationLayer
from nandguard.harness import mask_value
from nandguard.sanitize import SanitizeScheme
from nandguard.verify import (DEFAULT_UNIFORMITY_THRESHOLD, Verdict, VerifyMethod,
                              antiforensic_scan, build_page_reference,
                              distribution_verify, verify_and_retry,
                              xor_verify_page, xor_verify_sector)

PARAMS = CodecParams()


def programmed_device(text="BASILIA"):
    device = Device()
    ftl = FlashTranslationLayer(device, params=PARAMS)
    ftl.write_text(0, text)
    return device, ftl, ftl.map[0]


def flipped(bits, k):
    out = list(bits)
    for i in range(k):
        out[i] ^= 1
    return out


def test_sector_verdicts_around_capability():
    device, _, addr = programmed_device()
    reference = device.read_page(addr)[:64]
    cases = {0: Verdict.FAIL, 5: Verdict.FAIL, 8: Verdict.FAIL,
             9: Verdict.PASS, 21: Verdict.PASS}
    for k, expected in cases.items():
        verdict = xor_verify_sector(device, addr, 0, flipped(reference, k))
        assert verdict.ones_count == k
        assert verdict.threshold == 8
        assert verdict.verdict is expected


def test_sector_verdict_monotone_in_count():
    device, _, addr = programmed_device()
    reference = device.read_page(addr)[:64]
    passed = False
    for k in range(0, 33):
        v = xor_verify_sector(device, addr, 0, flipped(reference, k)).verdict
        if passed:
            assert v is Verdict.PASS
        passed = passed or v is Verdict.PASS


def test_page_verdict_is_conjunction():
    device, _, addr = programmed_device()
    geom = device.geometry
    stored = device.read_page(addr)[:geom.payload_bits]

    far = []
    for s in range(geom.sectors_per_page):
        far.extend(flipped(stored[s * 64:(s + 1) * 64], 21))
    assert xor_verify_page(device, addr, far).overall is Verdict.PASS

    one_near = list(far)
    one_near[:64] = flipped(stored[:64], 5)
    report = xor_verify_page(device, addr, one_near)
    assert report.overall is Verdict.FAIL
    assert [v.verdict for v in report.per_sector].count(Verdict.FAIL) == 1


def test_page_reference_length_checked():
    device, _, addr = programmed_device()
    with pytest.raises(LengthMismatch):
        xor_verify_page(device, addr, [0] * 100)


def test_fresh_page_fails_against_its_own_codeword():
    device, _, addr = programmed_device()
    reference = build_page_reference(device, addr, "BASILIA", PARAMS)
    report = xor_verify_page(device, addr, reference)
    assert report.overall is Verdict.FAIL
    assert all(v.ones_count == 0 for v in report.per_sector)


def test_verification_is_pure_and_repeatable():
    device, _, addr = programmed_device()
    reference = build_page_reference(device, addr, "BASILIA", PARAMS)
    before = image.state_hash(device)
    first = xor_verify_page(device, addr, reference)
    second = xor_verify_page(device, addr, reference)
    distribution_verify(device, addr)
    antiforensic_scan(device, "BASILIA", PARAMS)
    assert image.state_hash(device) == before
    assert [v.ones_count for v in first.per_sector] == \
        [v.ones_count for v in second.per_sector]


def test_distribution_scrubbed_page_statistic_exact():
    geom = Geometry(blocks_per_device=2, pages_per_block=4, cells_per_page=144,
                    sectors_per_page=6, bits_per_sector=64)
    device = Device(geom)
    addr = PageAddress(0, 0)
    device.program_page(addr, [CellState.P7] * 144)
    report = distribution_verify(device, addr)
    assert report.chi_square == pytest.approx(7 * 18 + (144 - 18) ** 2 / 18)
    assert report.chi_square == pytest.approx(1008.0)
    assert report.overall is Verdict.PASS


def test_distribution_erased_page_passes():
    device = Device()
    report = distribution_verify(device, PageAddress(0, 0))
    assert report.overall is Verdict.PASS


def test_distribution_data_page_fails():
    device, _, addr = programmed_device("NORMAL DATA PAGE CONTENT!")
    report = distribution_verify(device, addr)
    assert report.overall is Verdict.FAIL
    assert report.chi_square <= DEFAULT_UNIFORMITY_THRESHOLD


def test_distribution_threshold_is_tunable():
    device, _, addr = programmed_device()
    stat = distribution_verify(device, addr).chi_square
    assert distribution_verify(device, addr, stat - 0.01).overall is Verdict.PASS
    assert distribution_verify(device, addr, stat + 0.01).overall is Verdict.FAIL


def test_distribution_depends_only_on_cell_states():
    device, _, addr = programmed_device()
    stat = distribution_verify(device, addr).chi_square
    clone = Device(device.geometry)
    clone.program_page(PageAddress(5, 2), list(device.page_at(addr).cells))
    assert distribution_verify(clone, PageAddress(5, 2)).chi_square == stat


def test_scan_empty_device():
    assert antiforensic_scan(Device(), "BASILIA", PARAMS) == []


def test_scan_finds_residual_and_correctable_copy():
    device, ftl, addr = programmed_device()
    ftl.write_text(0, mask_value("BASILIA"))
    hits = antiforensic_scan(device, "BASILIA", PARAMS)
    assert [(h.block, h.page, h.min_distance) for h in hits] == \
        [(addr.block, addr.page, 0)]

    # a copy carrying a few bit errors is still equivalent original data
    geom = device.geometry
    residual_image = codec.unmap_raw_bits(device.read_page(addr), PARAMS.mapping)
    tampered = flipped(residual_image, 3)
    assert tampered[geom.payload_bits] == residual_image[geom.payload_bits]
    clone = Device(geom)
    clone.program_page(addr, codec.map_to_states(tampered, PARAMS.mapping))
    hits = antiforensic_scan(clone, "BASILIA", PARAMS)
    assert [(h.block, h.page, h.min_distance) for h in hits] == \
        [(addr.block, addr.page, 3)]


def test_scan_clean_after_scrub():
    device, ftl, addr = programmed_device()
    ftl.write_text(0, mask_value("BASILIA"))
    for hit in antiforensic_scan(device, "BASILIA", PARAMS):
        san.scrub(device, PageAddress(hit.block, hit.page))
        ftl.forget_mapping_for(PageAddress(hit.block, hit.page))
    assert antiforensic_scan(device, "BASILIA", PARAMS) == []


def ones_heavy_device():
    """A page whose codeword is nearly all ones: scrubbing it to all-P7 leaves
    every sector within the correction radius, so scrub alone cannot pass."""
    device = Device()
    addr = PageAddress(0, 0)
    geom = device.geometry
    payload = []
    for s in range(geom.sectors_per_page):
        payload.extend([1] * 60 + [0] * 4)
    image_bits = payload + [0] * geom.spare_bits
    device.program_page(addr, codec.map_to_states(image_bits, PARAMS.mapping))
    return device, addr, image_bits[:geom.payload_bits]


def test_retry_second_scheme_succeeds():
    # all-P0 page against a reference that matches the down-bit result exactly:
    # the first scheme lands on the reference (count 0, FAIL), the second still
    # has headroom to scatter the levels past the threshold
    device = Device()
    addr = PageAddress(0, 0)
    geom = device.geometry
    device.program_page(addr, [CellState.P0] * geom.cells_per_page)
    reference = [1 if i % 3 == 0 else 0 for i in range(geom.payload_bits)]
    outcome = verify_and_retry(device, addr, reference,
                               [SanitizeScheme.DOWN_BIT, SanitizeScheme.PARTIAL_OVERWRITE],
                               max_rounds=3, rng_seed=11)
    assert outcome.rounds_used == 2
    assert outcome.history[0].report.overall is Verdict.FAIL
    assert all(v.ones_count == 0 for v in outcome.history[0].report.per_sector)
    assert outcome.final_report.overall is Verdict.PASS


def test_retry_first_scheme_sufficient():
    device, ftl, addr = programmed_device()
    reference = build_page_reference(device, addr, "BASILIA", PARAMS)
    ftl.forget_mapping_for(addr)
    outcome = verify_and_retry(device, addr, reference, [SanitizeScheme.SCRUB])
    assert outcome.rounds_used == 1


def test_retry_exhausts_rounds():
    device, addr, reference = ones_heavy_device()
    with pytest.raises(ExhaustedRounds) as exc:
        verify_and_retry(device, addr, reference, [SanitizeScheme.SCRUB],
                         max_rounds=1)
    assert exc.value.rounds == 1
    assert len(exc.value.history) == 1
    assert exc.value.history[0].report.overall is Verdict.FAIL


def test_retry_validates_arguments():
    device, _, addr = programmed_device()
    with pytest.raises(ParameterError):
        verify_and_retry(device, addr, [0] * 512, [])
    with pytest.raises(ParameterError):
        verify_and_retry(device, addr, [0] * 512, [SanitizeScheme.SCRUB], max_rounds=0)


def test_report_serialization_shape():
    device, _, addr = programmed_device()
    reference = build_page_reference(device, addr, "BASILIA", PARAMS)
    xr = xor_verify_page(device, addr, reference).to_dict()
    assert xr["method"] == "xor_count"
    assert len(xr["sectors"]) == 8
    dr = distribution_verify(device, addr).to_dict()
    assert dr["method"] == "distribution"
    assert "chi_square" in dr and "histogram" in dr
