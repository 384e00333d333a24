"""Deterministic RNG stream derivation.

Every random quantity in the package is drawn from a ``numpy.random.Generator``
obtained through :func:`stream`. A stream is addressed by the master seed plus
a path of labels (strings or integers), so the same address always yields the
same stream regardless of process layout or worker count.
"""

import hashlib

import numpy as np


def _encode(part):
    """Map one path component to an integer for SeedSequence's spawn key."""
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("stream path integers must be non-negative, got %r" % (part,))
        return int(part)
    if isinstance(part, str):
        digest = hashlib.sha256(part.encode("utf-8")).digest()
        return int.from_bytes(digest[:4], "little")
    raise TypeError("stream path components must be str or int, got %r" % type(part).__name__)


def sequence(master_seed, *path):
    """Return the ``SeedSequence`` addressed by ``(master_seed, *path)``.

    A string master seed is hashed into the entropy, which lets callers
    carve out disjoint namespaces like ``"%d/walks" % seed`` without any
    coordination beyond the label.
    """
    if isinstance(master_seed, str):
        entropy = int.from_bytes(
            hashlib.sha256(master_seed.encode("utf-8")).digest(), "little"
        )
    elif isinstance(master_seed, (int, np.integer)) and master_seed >= 0:
        entropy = int(master_seed)
    else:
        raise ValueError("master_seed must be a non-negative integer or a string")
    key = tuple(_encode(p) for p in path)
    return np.random.SeedSequence(entropy, spawn_key=key)


def stream(master_seed, *path):
    """Return a ``numpy.random.Generator`` for the addressed stream."""
    return np.random.default_rng(sequence(master_seed, *path))
