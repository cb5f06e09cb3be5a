import pytest

from nandguard import codec
from nandguard.codec import CodecParams
from nandguard.flash_core import Device, Geometry, PageAddress, ProgramMode


@pytest.fixture
def small_geometry():
    # one 8-bit sector per page, 3 cells (9 bits, 1 spare)
    return Geometry(blocks_per_device=4, pages_per_block=4, cells_per_page=3,
                    sectors_per_page=1, bits_per_sector=8)


@pytest.fixture
def device():
    return Device()


def program_image(device: Device, addr: PageAddress, image_bits,
                  params: CodecParams = CodecParams()) -> None:
    """Program a raw page bit image (already scrambled or not, caller's choice)."""
    states = codec.map_to_states(image_bits, params.mapping)
    device.program_page(addr, states, ProgramMode.FULL)


def write_page_through_pipeline(device: Device, addr: PageAddress, data_bits,
                                params: CodecParams = CodecParams()) -> list[int]:
    """Assemble and program one page the way the translation layer would;
    returns the page image that was stored."""
    geom = device.geometry
    image = codec.assemble_page_image(data_bits, geom.page_index(addr), geom, params)
    program_image(device, addr, image, params)
    return image


class ScriptedRng:
    """random.Random stand-in whose .random() returns scripted values; used to
    inject bit flips at exact read positions."""

    def __init__(self, flip_positions, total_bits):
        self.values = [0.0 if i in flip_positions else 1.0 for i in range(total_bits)]
        self.pos = 0

    def random(self):
        v = self.values[self.pos]
        self.pos += 1
        return v
