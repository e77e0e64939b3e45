"""Counter-based random streams.

Every random draw in the package comes from a Philox generator keyed by
(seed, stream tag) with an explicit 256-bit counter.  Values are therefore a
pure function of (seed, tag, counter, position), which makes sweeps
reproducible regardless of the order sites are actually processed in.
"""

import numpy as np

# Stream tags keep independent uses of the same user seed from colliding.
TAG_GIBBS = 1
TAG_UNARY_INIT = 2
TAG_NET_INIT = 3
TAG_SAMPLE_INDEX = 4
TAG_DATASET = 5


def stream(seed: int, tag: int, counter: int = 0) -> np.random.Generator:
    """Generator for stream (seed, tag) positioned at a 64-bit counter word.

    Distinct counters give non-overlapping output blocks: the counter is
    placed in the third 64-bit word, leaving 2**128 draws per position.
    """
    bits = np.random.Philox(key=[seed & 0xFFFFFFFFFFFFFFFF, tag],
                            counter=[0, 0, counter, 0])
    return np.random.Generator(bits)


def derive_seed(*parts: int) -> int:
    """Mix integer parts into a fresh 64-bit seed (order-sensitive)."""
    return int(np.random.SeedSequence(parts).generate_state(1, np.uint64)[0])


class SweepUniformSource:
    """Reusable per-sweep uniform generator for one chain seed.

    uniforms(s, n) returns exactly the same values as
    stream(seed, TAG_GIBBS, counter=s).random(n) but re-seats one Philox
    instead of constructing a fresh one, which matters in tight sweep loops.
    """

    def __init__(self, seed: int):
        self._bits = np.random.Philox(key=[seed & 0xFFFFFFFFFFFFFFFF, TAG_GIBBS],
                                      counter=[0, 0, 0, 0])
        self._gen = np.random.Generator(self._bits)
        self._template = self._bits.state

    def uniforms(self, sweep: int, n: int) -> np.ndarray:
        st = self._template
        st["state"]["counter"][:] = (0, 0, sweep, 0)
        self._bits.state = st
        return self._gen.random(n)
