"""The four psychophysical probes: patch extraction, scale curves, spatial
maps with ratio statistics, and greedy cumulative activation/inhibition.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, EmptyError, InputError, TilingError
from .image import (
    Grid,
    Rect,
    flatten_to_gray,
    gray_to_rgb,
    insert_patch,
    load_png,
    make_black_canvas,
    resize,
    save_png,
    validate_image,
)
from .oracle import Oracle

# Default non-overlapping window sizes per oracle input family.
WINDOW_SIZES_600 = (50, 100, 150, 200)
WINDOW_SIZES_224 = (37, 56, 75, 112)


@dataclass(frozen=True)
class PatchSource:
    image_id: str
    window: Rect
    window_size: int


@dataclass
class Patch:
    """A cropped sub-region with its class, oracle probability and provenance."""

    image: np.ndarray
    class_id: str
    probability: float
    source: PatchSource
    oracle_id: str

    @property
    def patch_id(self) -> str:
        s = self.source
        return f"{s.image_id}:{s.window_size}:{s.window.x}+{s.window.y}"


@dataclass
class ProbabilityMap:
    """Probability of one patch's class at every enumerated placement."""

    positions: list[Rect]
    values: np.ndarray
    stride: int
    patch_id: str

    def __post_init__(self):
        if len(self.positions) != len(self.values):
            raise InputError("positions and values must have equal length")


@dataclass(frozen=True)
class SpatialStats:
    ratio: float
    max: float
    min: float
    argmax: Rect
    argmin: Rect


@dataclass
class PlacementTrace:
    """Greedy placement sequence: (cell, probability after placing there)."""

    steps: list[tuple[Rect, float]]
    mode: str  # "activation" | "inhibition"
    gain: float
    grid: Grid

    @property
    def prob_init(self) -> float:
        return self.steps[0][1]

    @property
    def prob_final(self) -> float:
        return self.steps[-1][1]


def fit_to_oracle(img: np.ndarray, oracle: Oracle) -> np.ndarray:
    """Resize/replicate an image so it matches the oracle's declared input."""
    in_h, in_w, in_c = oracle.input_size
    out = img
    if out.shape[2] != in_c:
        out = gray_to_rgb(out) if in_c == 3 else flatten_to_gray(out)
    if out.shape[0] != in_h or out.shape[1] != in_w:
        out = resize(out, in_w, in_h)
    return out


def window_positions(img_w: int, img_h: int, size: int) -> list[Rect]:
    """Row-major non-overlapping windows of the given size (stride = size)."""
    if size > img_w or size > img_h:
        raise TilingError(f"{size}px window does not fit a {img_w}x{img_h} image")
    return [
        Rect(x, y, size, size)
        for y in range(0, img_h - size + 1, size)
        for x in range(0, img_w - size + 1, size)
    ]


def extract_best_patch(images, class_id: str, window_sizes, oracle: Oracle,
                       image_ids=None) -> Patch:
    """Scan four images with non-overlapping windows and keep the most
    probable patch for class_id.

    Each candidate crop is resized to the oracle input and queried once.
    Ties go to the larger window, then the earlier image, then row-major
    position (guaranteed by scan order + strict improvement).
    """
    images = list(images)
    if len(images) != 4:
        raise InputError(f"patch extraction expects exactly 4 images, got {len(images)}")
    for img in images:
        validate_image(img)
    if image_ids is None:
        image_ids = [f"image{i}" for i in range(len(images))]
    best: Patch | None = None
    for size in sorted(set(int(s) for s in window_sizes), reverse=True):
        for img_idx, img in enumerate(images):
            h, w, _ = img.shape
            for win in window_positions(w, h, size):
                piece = img[win.y : win.y + win.h, win.x : win.x + win.w]
                prob = oracle.probability_of(fit_to_oracle(piece, oracle), class_id)
                if best is None or prob > best.probability:
                    best = Patch(
                        image=piece.copy(),
                        class_id=class_id,
                        probability=prob,
                        source=PatchSource(image_ids[img_idx], win, size),
                        oracle_id=oracle.oracle_id,
                    )
    assert best is not None
    return best


def local_property_curve(patches, scales, oracle: Oracle) -> dict[int, dict[str, float]]:
    """Mean patch probability per scale, measured two ways.

    For each scale s the patch is first resized to s x s, then probed
    (a) resized up to the full oracle input ("resized") and (b) embedded at
    native size in the center of a black canvas ("embedded").
    """
    patches = list(patches)
    if not patches:
        raise EmptyError("no patches to probe")
    in_h, in_w, in_c = oracle.input_size
    curve: dict[int, dict[str, float]] = {}
    for scale in scales:
        s = int(scale)
        if s > in_w or s > in_h:
            raise DimensionError(f"scale {s} exceeds oracle input {in_w}x{in_h}")
        resized_probs = []
        embedded_probs = []
        for patch in patches:
            at_scale = resize(patch.image, s, s)
            resized_probs.append(
                oracle.probability_of(fit_to_oracle(at_scale, oracle), patch.class_id)
            )
            canvas = make_black_canvas(in_w, in_h, in_c)
            pos = Rect((in_w - s) // 2, (in_h - s) // 2, s, s)
            embedded = insert_patch(canvas, _match_channels(at_scale, in_c), pos)
            embedded_probs.append(oracle.probability_of(embedded, patch.class_id))
        curve[s] = {
            "resized": float(np.mean(resized_probs)),
            "embedded": float(np.mean(embedded_probs)),
        }
    return curve


def _match_channels(img: np.ndarray, channels: int) -> np.ndarray:
    if img.shape[2] == channels:
        return img
    return gray_to_rgb(img) if channels == 3 else flatten_to_gray(img)


def spatial_map(patch: Patch, canvas_dims: tuple[int, int], stride: int,
                oracle: Oracle, jobs: int = 1) -> ProbabilityMap:
    """Probability of the patch's class at every placement on a black canvas.

    Positions step by `stride` row-major and stay fully in bounds; sparse
    mode is stride = patch size, dense mode any smaller stride.
    """
    if stride < 1:
        raise InputError(f"stride must be >= 1, got {stride}")
    canvas_w, canvas_h = int(canvas_dims[0]), int(canvas_dims[1])
    ph, pw, _ = patch.image.shape
    if pw > canvas_w or ph > canvas_h:
        raise DimensionError(f"{pw}x{ph} patch exceeds {canvas_w}x{canvas_h} canvas")
    in_c = oracle.input_size[2]
    piece = _match_channels(patch.image, in_c)
    canvas = make_black_canvas(canvas_w, canvas_h, in_c)
    positions = [
        Rect(x, y, pw, ph)
        for y in range(0, canvas_h - ph + 1, stride)
        for x in range(0, canvas_w - pw + 1, stride)
    ]

    def probe(pos: Rect) -> float:
        return oracle.probability_of(insert_patch(canvas, piece, pos), patch.class_id)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            values = list(pool.map(probe, positions))
    else:
        values = [probe(pos) for pos in positions]
    return ProbabilityMap(
        positions=positions,
        values=np.asarray(values, dtype=np.float64),
        stride=stride,
        patch_id=patch.patch_id,
    )


def spatial_stats(pmap: ProbabilityMap) -> SpatialStats:
    """Max/min/ratio of a probability map; argmax/argmin tie-break row-major."""
    if len(pmap.positions) == 0:
        raise EmptyError("probability map is empty")
    values = pmap.values
    i_max = int(np.argmax(values))
    i_min = int(np.argmin(values))
    v_max = float(values[i_max])
    v_min = float(values[i_min])
    ratio = math.inf if v_min == 0.0 else v_max / v_min
    return SpatialStats(
        ratio=ratio,
        max=v_max,
        min=v_min,
        argmax=pmap.positions[i_max],
        argmin=pmap.positions[i_min],
    )


def greedy_cumulative(patch: Patch, mode: str, canvas_dims: tuple[int, int],
                      oracle: Oracle, jobs: int = 1) -> PlacementTrace:
    """Greedy repeated placement over a 4x4 grid of patch-sized cells.

    Both modes start at the sparse-map argmax (the first best positioning
    that defines the initial probability). Activation then accepts the cell
    with the highest resulting probability while it strictly increases;
    inhibition accepts the lowest while it strictly decreases. Gain is
    final/initial probability.
    """
    if mode not in ("activation", "inhibition"):
        raise InputError(f"mode must be activation or inhibition, got {mode!r}")
    canvas_w, canvas_h = int(canvas_dims[0]), int(canvas_dims[1])
    ph, pw, _ = patch.image.shape
    if canvas_w != 4 * pw or canvas_h != 4 * ph:
        raise TilingError(
            f"canvas {canvas_w}x{canvas_h} is not a 4x4 tiling of {pw}x{ph} cells"
        )
    grid = Grid(cell_w=pw, cell_h=ph, cols=4, rows=4)
    cells = grid.cells()
    in_c = oracle.input_size[2]
    piece = _match_channels(patch.image, in_c)

    def evaluate(img: np.ndarray, idxs: list[int]) -> dict[int, float]:
        def probe(i: int) -> tuple[int, float]:
            return i, oracle.probability_of(insert_patch(img, piece, cells[i]),
                                            patch.class_id)

        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                return dict(pool.map(probe, idxs))
        return dict(probe(i) for i in idxs)

    current = make_black_canvas(canvas_w, canvas_h, in_c)
    first = evaluate(current, list(range(len(cells))))
    # row-major tie-break: scan in index order, strict improvement only
    start = max(range(len(cells)), key=lambda i: (first[i], -i))
    current = insert_patch(current, piece, cells[start])
    prob = first[start]
    occupied = {start}
    steps = [(cells[start], prob)]

    better = (lambda a, b: a > b) if mode == "activation" else (lambda a, b: a < b)
    while len(occupied) < len(cells):
        free = [i for i in range(len(cells)) if i not in occupied]
        scored = evaluate(current, free)
        pick = free[0]
        for i in free[1:]:
            if better(scored[i], scored[pick]):
                pick = i
        if not better(scored[pick], prob):
            break
        current = insert_patch(current, piece, cells[pick])
        prob = scored[pick]
        occupied.add(pick)
        steps.append((cells[pick], prob))

    init = steps[0][1]
    final = steps[-1][1]
    if init == 0.0:
        gain = 1.0 if final == 0.0 else math.inf
    else:
        gain = final / init
    return PlacementTrace(steps=steps, mode=mode, gain=gain, grid=grid)


def write_spatial_map_csv(pmap: ProbabilityMap, path) -> None:
    """CSV rows of (x, y, probability) for one probability map."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "probability"])
        for pos, value in zip(pmap.positions, pmap.values):
            writer.writerow([pos.x, pos.y, repr(float(value))])


def write_trace_csv(trace: PlacementTrace, path) -> None:
    """CSV rows of (step, cell_index, probability) for one greedy trace."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "cell_index", "probability"])
        for step, (cell, prob) in enumerate(trace.steps, start=1):
            writer.writerow([step, trace.grid.index_of(cell), repr(float(prob))])


def write_spatial_summary_csv(oracle_id: str, stats, path) -> None:
    """One aggregate row (oracle, avg_ratio, avg_max, avg_min) over many maps."""
    stats = list(stats)
    if not stats:
        raise EmptyError("no spatial stats to summarize")
    path = Path(path)
    avg_ratio = sum(s.ratio for s in stats) / len(stats)
    avg_max = sum(s.max for s in stats) / len(stats)
    avg_min = sum(s.min for s in stats) / len(stats)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["oracle", "avg_ratio", "avg_max", "avg_min"])
        writer.writerow([oracle_id, repr(avg_ratio), repr(avg_max), repr(avg_min)])


def save_patch(patch: Patch, png_path, meta_path=None) -> tuple[Path, Path]:
    """Persist a patch as PNG plus a JSON sidecar with its provenance."""
    png_path = Path(png_path)
    meta_path = Path(meta_path) if meta_path else png_path.with_suffix(".json")
    save_png(patch.image, png_path)
    meta = {
        "class_id": patch.class_id,
        "probability": patch.probability,
        "oracle_id": patch.oracle_id,
        "image_id": patch.source.image_id,
        "window": [patch.source.window.x, patch.source.window.y,
                   patch.source.window.w, patch.source.window.h],
        "window_size": patch.source.window_size,
    }
    with meta_path.open("w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return png_path, meta_path


def load_patch(png_path, meta_path=None) -> Patch:
    png_path = Path(png_path)
    meta_path = Path(meta_path) if meta_path else png_path.with_suffix(".json")
    with meta_path.open("r", encoding="utf-8") as fh:
        meta = json.load(fh)
    wx, wy, ww, wh = meta["window"]
    return Patch(
        image=load_png(png_path),
        class_id=meta["class_id"],
        probability=float(meta["probability"]),
        source=PatchSource(meta["image_id"], Rect(wx, wy, ww, wh), int(meta["window_size"])),
        oracle_id=meta.get("oracle_id", ""),
    )
