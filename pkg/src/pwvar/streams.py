"""Keyed, counter-based random streams.

Every stochastic stage derives its generator from a base seed plus a path of
labels, e.g. ``stream(seed, "diffusion", sample_index, step)``.  The path is
hashed into a 128-bit Philox key, so streams are independent of each other
and of the order in which they are created.  That is what makes per-sample
and per-pixel work safe to farm out to threads while staying bit-identical
to the serial run.
"""

import hashlib

import numpy as np

__all__ = ["stream", "stream_key"]


def stream_key(seed, *path):
    """Map (seed, *path) to a 128-bit integer key, stably across runs."""
    h = hashlib.blake2b(digest_size=16)
    h.update(str(int(seed)).encode())
    for part in path:
        if isinstance(part, (bool, np.bool_)):
            part = int(part)
        if isinstance(part, (int, np.integer)):
            token = str(int(part))
        elif isinstance(part, str):
            token = part
        else:
            raise TypeError(f"stream path parts must be int or str, got {type(part).__name__}")
        h.update(b"/")
        h.update(token.encode())
    return int.from_bytes(h.digest(), "little")


def stream(seed, *path):
    """Return a ``numpy.random.Generator`` for the given seed and path."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, *path)))
