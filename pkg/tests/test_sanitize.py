import json
import pathlib
import random

import pytest
from hypothesis import given, settings, strategies as st

import nandguard.sanitize as san
from nandguard import codec
from nandguard.codec import CodecParams, ecc_decode
from nandguard.errors import BadBlock, DecodeFailure, ParameterError
from nandguard.flash_core import CellState, Device, Geometry, PageAddress, PageValidity
from nandguard.sanitize import SanitizeScheme

FIXTURES = pathlib.Path(__file__).parent / "fixtures"

GEOM = Geometry(blocks_per_device=2, pages_per_block=3, cells_per_page=12,
                sectors_per_page=1, bits_per_sector=8)


def fresh_page(states=None, geometry=GEOM):
    device = Device(geometry)
    addr = PageAddress(0, 1)
    if states is not None:
        device.program_page(addr, states)
    return device, addr


def test_scrub_saturates_everything():
    device, addr = fresh_page([CellState(v) for v in (0, 3, 5, 7, 1, 2)])
    metrics = san.scrub(device, addr)
    page = device.page_at(addr)
    assert all(c is CellState.P7 for c in page.cells)
    assert page.validity is PageValidity.INVALID
    assert metrics.wear_delta == 1
    assert metrics.generated_bits == GEOM.cells_per_page
    assert metrics.disturb_events == 3 * 2  # weight 3, two neighbors


def test_scrub_idempotent_on_saturated_page():
    device, addr = fresh_page([CellState.P7] * 12)
    metrics = san.scrub(device, addr)
    assert all(c is CellState.P7 for c in device.page_at(addr).cells)
    assert metrics.wear_delta == 1  # metrics still accrue


def test_partial_overwrite_golden():
    golden = json.loads((FIXTURES / "partial_overwrite.json").read_text())
    device, addr = fresh_page([CellState(golden["start_level"])] * golden["cells"])
    san.partial_overwrite(device, addr, rng_seed=golden["rng_seed"])
    assert [int(c) for c in device.page_at(addr).cells] == golden["levels"]


def test_partial_overwrite_no_headroom():
    device, addr = fresh_page([CellState.P7] * 12)
    san.partial_overwrite(device, addr, rng_seed=5)
    assert all(c is CellState.P7 for c in device.page_at(addr).cells)


@given(seed=st.integers(0, 10_000),
       levels=st.lists(st.integers(0, 7), min_size=12, max_size=12))
@settings(max_examples=60)
def test_partial_overwrite_monotone(seed, levels):
    device, addr = fresh_page([CellState(v) for v in levels])
    san.partial_overwrite(device, addr, rng_seed=seed)
    after = device.page_at(addr).cells
    assert all(a >= CellState(b) for a, b in zip(after, levels))


def test_down_bit_collapses_low_half():
    geometry = Geometry(blocks_per_device=1, pages_per_block=2, cells_per_page=8,
                        sectors_per_page=1, bits_per_sector=8)
    device, addr = Device(geometry), PageAddress(0, 0)
    device.program_page(addr, [CellState(v) for v in range(8)])
    san.down_bit_program(device, addr)
    assert [int(c) for c in device.page_at(addr).cells] == [4, 4, 4, 4, 4, 5, 6, 7]
    hist = device.cell_count_histogram(addr)
    assert all(int(state) >= 4 for state in hist)


def test_down_bit_leaves_high_levels():
    device, addr = fresh_page([CellState.P7] * 12)
    san.down_bit_program(device, addr)
    assert all(c is CellState.P7 for c in device.page_at(addr).cells)


def test_deletion_pulse_saturation():
    device, addr = fresh_page([CellState.P0] * 12)
    metrics = san.deletion_pulse(device, addr, pulses=7)
    assert all(c is CellState.P7 for c in device.page_at(addr).cells)
    assert metrics.generated_bits == 0
    assert metrics.duration_units == 7


def test_deletion_pulse_saturates_from_high_levels():
    device, addr = fresh_page([CellState.P5, CellState.P6, CellState.P7])
    san.deletion_pulse(device, addr, pulses=3)
    assert [int(c) for c in device.page_at(addr).cells[:3]] == [7, 7, 7]


def test_deletion_pulse_first_level_from_erased():
    device, addr = fresh_page(None)
    san.deletion_pulse(device, addr, pulses=1)
    assert all(c is CellState.P0 for c in device.page_at(addr).cells)


def test_deletion_pulse_rejects_zero():
    device, addr = fresh_page()
    with pytest.raises(ParameterError):
        san.deletion_pulse(device, addr, pulses=0)
    with pytest.raises(ParameterError):
        san.sanitize(device, addr, SanitizeScheme.DELETION_PULSE, pulses=0)


def test_dispatch_matches_direct_calls():
    states = [CellState(v) for v in (0, 1, 2, 3, 4, 5, 6, 7, 0, 1, 2, 3)]
    d1, a1 = fresh_page(states)
    d2, a2 = fresh_page(states)
    m1 = san.sanitize(d1, a1, SanitizeScheme.SCRUB)
    m2 = san.scrub(d2, a2)
    assert d1.page_at(a1).cells == d2.page_at(a2).cells
    assert m1 == m2


def test_bad_block_rejected():
    device, addr = fresh_page([CellState.P0] * 12)
    device.blocks[0].bad = True
    for scheme in SanitizeScheme:
        with pytest.raises(BadBlock):
            san.sanitize(device, addr, scheme)


def test_metric_ordering_matches_cost_table():
    states = [CellState(v) for v in (0, 1, 2, 3, 4, 5, 6, 7, 0, 1, 2, 3)]
    metrics = {}
    for scheme in SanitizeScheme:
        device, addr = fresh_page(states)
        metrics[scheme] = san.sanitize(device, addr, scheme, rng_seed=1)
    d = {s: m.disturb_events for s, m in metrics.items()}
    assert d[SanitizeScheme.SCRUB] > d[SanitizeScheme.PARTIAL_OVERWRITE]
    assert d[SanitizeScheme.PARTIAL_OVERWRITE] > d[SanitizeScheme.DOWN_BIT]
    assert d[SanitizeScheme.DOWN_BIT] == d[SanitizeScheme.DELETION_PULSE]
    wear = {s: m.wear_delta for s, m in metrics.items()}
    assert wear[SanitizeScheme.SCRUB] == 1
    assert all(w == 0 for s, w in wear.items() if s is not SanitizeScheme.SCRUB)
    gen = {s: m.generated_bits for s, m in metrics.items()}
    assert gen[SanitizeScheme.DELETION_PULSE] == 0
    assert gen[SanitizeScheme.SCRUB] == gen[SanitizeScheme.DOWN_BIT] == 12
    assert gen[SanitizeScheme.PARTIAL_OVERWRITE] == 36


@given(scheme=st.sampled_from(list(SanitizeScheme)),
       levels=st.lists(st.integers(-1, 7), min_size=12, max_size=12),
       seed=st.integers(0, 1000))
@settings(max_examples=80)
def test_all_schemes_are_state_monotone(scheme, levels, seed):
    device = Device(GEOM)
    addr = PageAddress(0, 1)
    programmed = [CellState(v) for v in levels if v >= 0]
    if programmed:
        device.program_page(addr, programmed)
    before = list(device.page_at(addr).cells)
    san.sanitize(device, addr, scheme, rng_seed=seed)
    after = device.page_at(addr).cells
    assert all(b <= a for b, a in zip(before, after))


def test_saturating_schemes_defeat_ecc():
    """Pages scrubbed or fully pulsed must land beyond the correction radius of
    their former codeword in every sector, across many seeded contents."""
    geom = Geometry()
    params = CodecParams()
    rng = random.Random(2024)
    for scheme, pulses in ((SanitizeScheme.SCRUB, None),
                           (SanitizeScheme.DELETION_PULSE, san.SATURATION_PULSES)):
        failures = 0
        for trial in range(250):
            device = Device(geom)
            addr = PageAddress(0, trial % geom.pages_per_block)
            data = [rng.getrandbits(1) for _ in range(geom.payload_bits)]
            image = codec.assemble_page_image(data, geom.page_index(addr), geom, params)
            device.program_page(addr, codec.map_to_states(image, params.mapping))
            before = device.read_page(addr)
            san.sanitize(device, addr, scheme, pulses=pulses)
            after = device.read_page(addr)
            for s in range(geom.sectors_per_page):
                lo = s * geom.bits_per_sector
                hi = lo + geom.bits_per_sector
                try:
                    ecc_decode(after[lo:hi], before[lo:hi], params.ecc)
                    failures += 1
                except DecodeFailure:
                    pass
        assert failures == 0, f"{scheme}: {failures} sectors stayed correctable"
