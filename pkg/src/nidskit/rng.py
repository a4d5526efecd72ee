"""Seeded, splittable random number streams.

Every stochastic step in the package (weight init, shuffling, dropout,
stochastic pooling, bootstrap sampling) draws from a stream derived from
a single 64-bit run seed plus a tuple of integer/str tokens naming the
consumer, e.g. ``stream(seed, "dropout", layer_index, epoch)``.

Streams are backed by numpy's Philox counter-based generator, which is
specified independently of platform and word size: identical seeds and
tokens produce identical draw sequences everywhere.  Distinct token
tuples give statistically independent streams, so the order in which
concurrent consumers draw can never change any result.
"""

import zlib

import numpy as np


def _token_words(tokens) -> list[int]:
    words = []
    for t in tokens:
        if isinstance(t, str):
            words.append(zlib.crc32(t.encode("utf-8")))
        elif isinstance(t, (int, np.integer)):
            words.append(int(t) & 0xFFFFFFFF)
            words.append((int(t) >> 32) & 0xFFFFFFFF)
        else:
            raise TypeError(f"stream tokens must be int or str, got {type(t).__name__}")
    return words


def stream(seed: int, *tokens) -> np.random.Generator:
    """Return the generator for (seed, tokens); same args, same sequence."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=tuple(_token_words(tokens)))
    return np.random.Generator(np.random.Philox(ss))


def child_seed(seed: int, *tokens) -> int:
    """Derive a 64-bit sub-seed, for handing to components that reseed themselves."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=tuple(_token_words(tokens)))
    return int(ss.generate_state(1, np.uint64)[0])
