"""Shared oracle constructions and naive reference implementations.

The references here are deliberately slow double loops, independent of the
library's vectorized paths, so tests can cross-check values against them.
"""

from __future__ import annotations

import math

import numpy as np

from psyprobe.image import Rect
from psyprobe.oracle import (
    OracleBudget,
    SyntheticOracle,
    SyntheticOracleSpec,
)
from psyprobe.probing import Patch, PatchSource


def naive_synthetic_score(spec: SyntheticOracleSpec, img: np.ndarray, class_id: str) -> float:
    """Reference score: explicit python loop over every pixel."""
    tmpl = spec.templates[class_id]
    smap = spec.sensitivity_maps[class_id]
    h, w, c = spec.canvas_dims
    total = 0.0
    for i in range(h):
        for j in range(w):
            for k in range(c):
                sim = 1.0 - abs(float(img[i, j, k]) - float(tmpl[i, j, k]))
                total += float(smap[i, j, k]) * sim
    if spec.score_floor is not None:
        total = max(total, spec.score_floor)
    return total


def naive_probabilities(spec: SyntheticOracleSpec, img: np.ndarray) -> dict[str, float]:
    scores = [naive_synthetic_score(spec, img, cls) / spec.temperature
              for cls in spec.classes]
    m = max(scores)
    exps = [math.exp(s - m) for s in scores]
    z = sum(exps)
    return {cls: e / z for cls, e in zip(spec.classes, exps)}


def brightness_tradeoff_spec(size: int, w_target: float = 1.0, w_other: float = 0.9,
                             temperature: float | None = None) -> SyntheticOracleSpec:
    """Two-class oracle whose decision is linear in inserted brightness mass.

    Class "target" matches mid-gray (template 0.5), class "bright" matches
    white (template 1.0). On a 0.5-gray image, score_target = w_target*N and
    score_bright = w_other*N/2; every unit of added brightness moves
    score_target down and score_bright up, so the top-1 flips once the
    inserted mass crosses brightness_flip_mass(). The default temperature
    keeps the softmax away from saturation across a whole 16-cell run.
    """
    dims = (size, size, 1)
    if temperature is None:
        temperature = 0.08 * size * size
    maps = {
        "target": np.full(dims, w_target, dtype=np.float64),
        "bright": np.full(dims, w_other, dtype=np.float64),
    }
    templates = {
        "target": np.full(dims, 0.5, dtype=np.float32),
        "bright": np.ones(dims, dtype=np.float32),
    }
    return SyntheticOracleSpec(dims, ["target", "bright"], maps, templates,
                               temperature, name="brightness-tradeoff")


def brightness_flip_mass(size: int, w_target: float, w_other: float) -> float:
    """Added mass above which class "bright" overtakes class "target"."""
    n = size * size
    return (w_target * n - w_other * n / 2.0) / (w_target + w_other)


def gray_image(size: int, value: float = 0.5, channels: int = 1) -> np.ndarray:
    return np.full((size, size, channels), value, dtype=np.float32)


def channel_blind_spec(size: int, blind_channel: int = 0,
                       temperature: float = 1.0) -> SyntheticOracleSpec:
    """3-channel oracle with zero sensitivity on one channel everywhere.

    On an all-gray target every cell's weakest channel ties to index 0, so
    decoys only ever touch the blind channel and no placement can move any
    score.
    """
    dims = (size, size, 3)
    maps = {}
    templates = {}
    for idx, cls in enumerate(["target", "other"]):
        m = np.full(dims, 0.5 + 0.5 * (idx == 0), dtype=np.float64)
        m[:, :, blind_channel] = 0.0
        maps[cls] = m
        templates[cls] = np.full(dims, 0.5 if idx == 0 else 1.0, dtype=np.float32)
    return SyntheticOracleSpec(dims, ["target", "other"], maps, templates,
                               temperature, name="channel-blind")


def structure_sensitive_spec(size: int, pattern01: np.ndarray, tau: float,
                             alpha: float = 1.75, w_target: float = 1.0,
                             w_mimic: float = 1.0,
                             temperature: float = 10.0) -> SyntheticOracleSpec:
    """Two-class oracle that rewards one specific decoy pattern.

    Class "mimic"'s template is mid-gray plus alpha times the attenuated
    pattern, tiled over every cell, so inserting that exact pattern raises
    the mimic score by its full mass while uncorrelated content (noise) is
    mostly self-cancelling. Class "target" matches plain mid-gray.
    """
    cell = pattern01.shape[0]
    dims = (size, size, 1)
    tiled = np.tile(pattern01, (size // cell, size // cell, 1)) / tau * alpha
    maps = {
        "target": np.full(dims, w_target, dtype=np.float64),
        "mimic": np.full(dims, w_mimic, dtype=np.float64),
    }
    templates = {
        "target": np.full(dims, 0.5, dtype=np.float32),
        "mimic": np.clip(0.5 + tiled, 0.0, 1.0).astype(np.float32),
    }
    return SyntheticOracleSpec(dims, ["target", "mimic"], maps, templates,
                               temperature, name="structure-sensitive")


def noise_decoy_matched_std(cell: int, seed: int, target_std: float, tau: float,
                            base_std_255: float = 130.0):
    """Gaussian-noise decoy rescaled (with clamp) to a given pixel std.

    Binary-searches the scale factor on the rising branch of the
    std-vs-scale curve; returns None when the target std is unreachable.
    """
    from psyprobe.image import Decoy, gaussian_noise_image, make_decoy

    base = make_decoy(gaussian_noise_image(cell, cell, base_std_255, seed=seed),
                      tau).pixels
    cap = 1.0 / tau
    step = 0.005
    best_s, last = None, -1.0
    s = step
    while s < 16.0:
        cur = float(np.clip(base * s, 0, cap).std())
        if cur < last:
            break
        last = cur
        if cur >= target_std:
            best_s = s
            break
        s += step
    if best_s is None:
        return None
    lo, hi = best_s - step, best_s
    for _ in range(50):
        mid = (lo + hi) / 2
        if float(np.clip(base * mid, 0, cap).std()) < target_std:
            lo = mid
        else:
            hi = mid
    px = np.clip(base * hi, 0, cap).astype(np.float32)
    return Decoy(pixels=px, tau=tau, source_patch_id=f"gaussian-matched-{seed}",
                 std=float(px.std()))


def make_patch(image: np.ndarray, class_id: str = "target", probability: float = 0.5,
               image_id: str = "src", window: Rect | None = None,
               oracle_id: str = "test") -> Patch:
    h, w, _ = image.shape
    window = window or Rect(0, 0, w, h)
    return Patch(
        image=np.asarray(image, dtype=np.float32),
        class_id=class_id,
        probability=probability,
        source=PatchSource(image_id, window, window.w),
        oracle_id=oracle_id,
    )


def binary_patch_image(size: int, ones_fraction: float, seed: int = 0) -> np.ndarray:
    """Deterministic 0/1 pattern with the requested fraction of ones."""
    n = size * size
    k = round(ones_fraction * n)
    flat = np.zeros(n, dtype=np.float32)
    order = np.random.default_rng(seed).permutation(n)
    flat[order[:k]] = 1.0
    return flat.reshape(size, size, 1)


def oracle_of(spec: SyntheticOracleSpec, max_queries: int | None = None) -> SyntheticOracle:
    return SyntheticOracle(spec, OracleBudget(max_queries))
