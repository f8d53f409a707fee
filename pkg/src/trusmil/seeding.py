"""Deterministic seed derivation for independent RNG substreams.

Every stochastic stage takes an explicit seed. Substreams (per core, per
augmentation draw, per fold leg) are derived by hashing the parent seed
together with string/int tags, so results are independent of execution
order and safe to compute in parallel.
"""

import hashlib


def derive_seed(base: int, *tags) -> int:
    """Derive a 63-bit child seed from ``base`` and a sequence of tags.

    Tags may be strings or integers. The same (base, tags) always yields
    the same child seed; distinct tag tuples yield independent streams.
    """
    h = hashlib.sha256()
    h.update(str(int(base)).encode())
    for tag in tags:
        h.update(b"/")
        h.update(str(tag).encode())
    return int.from_bytes(h.digest()[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF
