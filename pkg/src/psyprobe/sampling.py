"""Seeded, portable dataset sampling.

The shuffle is Fisher-Yates driven by splitmix64 ("fy-splitmix64-v1"): the
generator and the index rule j = next() % (i + 1) are both part of the
versioned contract, so selections are reproducible across platforms and
Python versions.
"""

from __future__ import annotations

from pathlib import Path

from .errors import InputError

PRNG_NAME = "fy-splitmix64-v1"

_MASK64 = (1 << 64) - 1

IMAGE_SUFFIXES = (".png", ".pimg")


class SplitMix64:
    """64-bit splitmix generator (public-domain algorithm by Steele et al.)."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)


def fisher_yates(items, seed: int) -> list:
    """Seeded Fisher-Yates shuffle (copy); index rule j = next() % (i + 1)."""
    out = list(items)
    rng = SplitMix64(seed)
    for i in range(len(out) - 1, 0, -1):
        j = rng.next_u64() % (i + 1)
        out[i], out[j] = out[j], out[i]
    return out


def sample_images(directory, n: int, seed: int) -> list[str]:
    """First n filenames of the seeded shuffle of the sorted directory listing."""
    directory = Path(directory)
    names = sorted(
        p.name for p in directory.iterdir()
        if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
    )
    if n < 0:
        raise InputError(f"sample size must be >= 0, got {n}")
    if len(names) < n:
        raise InputError(
            f"{directory} holds {len(names)} images but {n} were requested"
        )
    return fisher_yates(names, seed)[:n]
