from typing import List

import numpy as np
from cryptography.hazmat.backends import default_backend
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from spiketest.constants import SEED_INFO_PREFIX, SEED_LENGTH


class SeedUtils:
    @staticmethod
    def derive_key(master_seed: int, info: bytes, length: int = SEED_LENGTH) -> bytes:
        if master_seed < 0:
            raise ValueError(f"Invalid master seed: {master_seed} (expected a nonnegative integer)")
        hkdf = HKDF(
            algorithm=hashes.SHA256(),
            length=length,
            salt=b'',
            info=info,
            backend=default_backend()
        )
        return hkdf.derive(int(master_seed).to_bytes(16, "big"))

    @staticmethod
    def replication_seed(master_seed: int, rep_index: int) -> int:
        """64-bit seed of replication ``rep_index``; independent of run order."""
        info = SEED_INFO_PREFIX + str(rep_index).encode("ascii")
        return int.from_bytes(SeedUtils.derive_key(master_seed, info), "big")

    @staticmethod
    def replication_seeds(master_seed: int, reps: int) -> List[int]:
        return [SeedUtils.replication_seed(master_seed, r) for r in range(reps)]

    @staticmethod
    def generator(seed: int) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=int(seed)))
