"""NAND flash simulator with secure-deletion verification.

Models a 3-bit-per-cell array bit-accurately, the translation-layer
behaviors that leave residual data in unmanaged blocks, four secure-deletion
schemes, and two real-time deletion-verification methods (per-sector XOR
cell counting against the error-correction capability, and a reference-free
cell-count distribution check), plus the attacker view that recovers
error-correctable residual copies.
"""

from .codec import (CodecParams, EccConfig, MappingTable, ScramblerConfig,
                    ecc_decode, encode_text, hamming_distance, map_to_states,
                    scramble, unmap_states)
from .flash_core import (CellState, Device, Geometry, PageAddress, PageValidity,
                         ProgramMode, ReadNoise)
from .forensics import AttackerContext, dump_unmanaged, recover
from .ftl import (FlashTranslationLayer, FtlConfig, TrimMode, TrimPolicy,
                  UnmanagedReason)
from .harness import (DeidRecord, DeidTechnique, PipelineConfig, RunOutcome,
                      benchmark_schemes, deid_run, store_record)
from .image import image_load, image_save, state_hash
from .sanitize import SanitizeMetrics, SanitizeScheme
from .verify import (Verdict, VerificationReport, VerifyMethod, antiforensic_scan,
                     distribution_verify, verify_and_retry, xor_verify_page,
                     xor_verify_sector)

__version__ = "0.1.0"
