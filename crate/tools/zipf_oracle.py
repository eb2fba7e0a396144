#!/usr/bin/env python3
"""Independent oracle for the Zipfian rank-stream fixtures.

Re-implements the sampling pipeline from scratch — splitmix64, the
cumulative table, and inverse-CDF lookup — without touching the Rust code,
and prints fixture lines of the form:

    seed key_count skew rank1 rank2 ... rank16

Regenerate the fixture with:

    python3 tools/zipf_oracle.py > crates/core/tests/fixtures/zipf_vectors.txt
"""

import bisect

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return (z ^ (z >> 31)) & MASK


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK
        return mix64(self.state)

    def next_f64(self) -> float:
        return (self.next_u64() >> 11) * (2.0 ** -53)


def build_cumulative(n: int, alpha: float):
    # Harmonic sum smallest-terms-first (i = n down to 1), matching the
    # summation-order contract of the table builder.
    h = 0.0
    for i in range(n, 0, -1):
        h += 1.0 / (float(i) ** alpha)
    c = []
    acc = 0.0
    for i in range(1, n + 1):
        acc += (1.0 / (float(i) ** alpha)) / h
        c.append(acc)
    return c


def sample_ranks(seed: int, n: int, alpha: float, count: int):
    c = build_cumulative(n, alpha)
    rng = SplitMix64(seed)
    ranks = []
    for _ in range(count):
        r = rng.next_f64()
        # Smallest k (1-based) with C[k] > r.
        idx = bisect.bisect_right(c, r)
        ranks.append(min(idx + 1, n))
    return ranks


CASES = [
    (42, 1000, 0.9),
    (42, 1000, 1.4),
    (7, 100, 1.0),
    (123, 3, 1.0),
    (9, 10, 0.0),
    (2024, 100000, 0.99),
]

if __name__ == "__main__":
    print("# seed key_count skew rank1..rank16")
    for seed, n, alpha in CASES:
        ranks = sample_ranks(seed, n, alpha, 16)
        print(f"{seed} {n} {alpha} " + " ".join(str(r) for r in ranks))
