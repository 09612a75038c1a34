"""Deterministic sub-seed derivation.

Every random draw in the toolkit flows from one master seed. Sub-seeds are
derived by hashing the master seed together with the labels that identify
the consumer (flow id, sweep cell, ...), so results never depend on Python's
randomized ``hash()`` or on execution order.
"""
import hashlib
import numbers
from typing import Any

SEED_BITS = 63


def _label(part: Any) -> str:
    # numpy scalars repr differently from builtins; normalise them first
    if isinstance(part, bool):
        return str(part)
    if isinstance(part, numbers.Integral):
        return str(int(part))
    if isinstance(part, numbers.Real):
        return repr(float(part))
    return str(part)


def derive_seed(*parts: Any) -> int:
    """Return a non-negative 63-bit seed derived from the given labels."""
    text = '|'.join(_label(p) for p in parts)
    digest = hashlib.sha256(text.encode('utf-8')).digest()
    return int.from_bytes(digest[:8], 'big') & ((1 << SEED_BITS) - 1)
