"""Pixel-exact image representation and the geometric/arithmetic ops the probes need.

Images are float32 numpy arrays of shape (height, width, channels) with
channels in {1, 3} and every intensity in [0, 1]. All operations are pure:
inputs are never mutated and outputs are freshly allocated.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BoundsError,
    DimensionError,
    FormatError,
    ParameterError,
    TilingError,
)

PIMG_MAGIC = b"PIMG"


@dataclass(frozen=True)
class Rect:
    """Axis-aligned window: (x, y) is the top-left pixel, w/h its extent."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise DimensionError(f"rect must have positive extent, got {self.w}x{self.h}")


@dataclass(frozen=True)
class Grid:
    """Exact tiling of an image into cols x rows non-overlapping cells."""

    cell_w: int
    cell_h: int
    cols: int
    rows: int

    @property
    def cell_count(self) -> int:
        return self.cols * self.rows

    def cells(self) -> list[Rect]:
        """Row-major list of cell rects."""
        return [
            Rect(c * self.cell_w, r * self.cell_h, self.cell_w, self.cell_h)
            for r in range(self.rows)
            for c in range(self.cols)
        ]

    def index_of(self, cell: Rect) -> int:
        """Row-major index of a cell rect belonging to this grid."""
        if cell.x % self.cell_w or cell.y % self.cell_h:
            raise TilingError(f"{cell} is not aligned to a {self.cell_w}x{self.cell_h} grid")
        return (cell.y // self.cell_h) * self.cols + (cell.x // self.cell_w)


@dataclass(frozen=True)
class Decoy:
    """Transparency-attenuated single-channel perturbation pattern.

    pixels is a (h, w) float32 buffer with values in [0, 1/tau]; std is the
    population standard deviation of those values.
    """

    pixels: np.ndarray
    tau: float
    source_patch_id: str
    std: float

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])


def validate_image(img: np.ndarray) -> np.ndarray:
    """Check the (h, w, c) [0,1] float32 contract; returns img unchanged."""
    if not isinstance(img, np.ndarray) or img.ndim != 3:
        raise DimensionError("image must be a (h, w, c) numpy array")
    h, w, c = img.shape
    if h <= 0 or w <= 0:
        raise DimensionError(f"image must have positive dims, got {h}x{w}")
    if c not in (1, 3):
        raise DimensionError(f"channels must be 1 or 3, got {c}")
    return img


def check_bounds(img: np.ndarray, r: Rect) -> None:
    h, w = img.shape[:2]
    if r.x < 0 or r.y < 0 or r.x + r.w > w or r.y + r.h > h:
        raise BoundsError(f"{r} does not fit inside a {w}x{h} image")


def make_black_canvas(w: int, h: int, channels: int = 1) -> np.ndarray:
    """All-zero image of the given size."""
    if w <= 0 or h <= 0:
        raise DimensionError(f"canvas dims must be positive, got {w}x{h}")
    if channels not in (1, 3):
        raise DimensionError(f"channels must be 1 or 3, got {channels}")
    return np.zeros((h, w, channels), dtype=np.float32)


def crop(img: np.ndarray, r: Rect) -> np.ndarray:
    """Bit-exact copy of the window r."""
    validate_image(img)
    check_bounds(img, r)
    return img[r.y : r.y + r.h, r.x : r.x + r.w].copy()


def resize(img: np.ndarray, w: int, h: int) -> np.ndarray:
    """Bilinear resize with corner-aligned sampling, clamped to [0, 1].

    Corner alignment maps output pixel i to source coordinate
    i * (src - 1) / (dst - 1), so a same-size resize is the identity and
    constant images stay constant.
    """
    validate_image(img)
    if w <= 0 or h <= 0:
        raise DimensionError(f"target dims must be positive, got {w}x{h}")
    src_h, src_w, _ = img.shape
    if (src_h, src_w) == (h, w):
        return img.copy()

    def _coords(dst: int, src: int) -> np.ndarray:
        if dst == 1 or src == 1:
            return np.zeros(dst, dtype=np.float64)
        return np.arange(dst, dtype=np.float64) * ((src - 1) / (dst - 1))

    ys = _coords(h, src_h)
    xs = _coords(w, src_w)
    y0 = np.minimum(np.floor(ys).astype(np.int64), max(src_h - 2, 0))
    x0 = np.minimum(np.floor(xs).astype(np.int64), max(src_w - 2, 0))
    y1 = np.minimum(y0 + 1, src_h - 1)
    x1 = np.minimum(x0 + 1, src_w - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]

    src = img.astype(np.float64)
    top = src[y0][:, x0] * (1.0 - wx) + src[y0][:, x1] * wx
    bot = src[y1][:, x0] * (1.0 - wx) + src[y1][:, x1] * wx
    out = top * (1.0 - wy) + bot * wy
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def insert_patch(canvas: np.ndarray, patch: np.ndarray, pos: Rect) -> np.ndarray:
    """Pixel-wise add of patch over the pos region, clamped to [0, 1].

    A 1-channel patch broadcasts into every canvas channel. On an all-zero
    canvas this is an exact copy of the patch.
    """
    validate_image(canvas)
    validate_image(patch)
    ph, pw, pc = patch.shape
    if (pw, ph) != (pos.w, pos.h):
        raise DimensionError(f"patch is {pw}x{ph} but pos is {pos.w}x{pos.h}")
    check_bounds(canvas, pos)
    cc = canvas.shape[2]
    if pc != cc and pc != 1:
        raise DimensionError(f"cannot insert {pc}-channel patch into {cc}-channel canvas")
    out = canvas.copy()
    region = out[pos.y : pos.y + pos.h, pos.x : pos.x + pos.w]
    out[pos.y : pos.y + pos.h, pos.x : pos.x + pos.w] = np.clip(region + patch, 0.0, 1.0)
    return out


def grid_cells(img_w: int, img_h: int, cell: int) -> list[Rect]:
    """Row-major rects of the exact non-overlapping cell x cell tiling."""
    if cell <= 0:
        raise TilingError(f"cell size must be positive, got {cell}")
    if img_w % cell or img_h % cell:
        raise TilingError(f"{cell}px cells do not tile a {img_w}x{img_h} image")
    return make_grid(img_w, img_h, cell).cells()


def make_grid(img_w: int, img_h: int, cell: int) -> Grid:
    if cell <= 0 or img_w % cell or img_h % cell:
        raise TilingError(f"{cell}px cells do not tile a {img_w}x{img_h} image")
    return Grid(cell_w=cell, cell_h=cell, cols=img_w // cell, rows=img_h // cell)


def normalize_patch(patch: np.ndarray) -> np.ndarray:
    """Min-max normalization to [0, 1]; a constant patch maps to all zeros."""
    validate_image(patch)
    lo = float(patch.min())
    hi = float(patch.max())
    if hi == lo:
        return np.zeros_like(patch)
    return ((patch.astype(np.float64) - lo) / (hi - lo)).astype(np.float32)


def make_decoy(patch: np.ndarray, tau: float, source_patch_id: str = "") -> Decoy:
    """Normalize a single-channel patch and attenuate it by tau."""
    validate_image(patch)
    if patch.shape[2] != 1:
        raise DimensionError("decoys are built from single-channel patches")
    if tau < 1.0:
        raise ParameterError(f"transparency coefficient must be >= 1, got {tau}")
    pixels = (normalize_patch(patch)[:, :, 0].astype(np.float64) / tau).astype(np.float32)
    return Decoy(
        pixels=pixels,
        tau=float(tau),
        source_patch_id=source_patch_id,
        std=float(np.std(pixels.astype(np.float64))),
    )


def weakest_channel(img: np.ndarray, region: Rect) -> int:
    """Channel with the lowest mean intensity over region; ties -> lowest index."""
    validate_image(img)
    check_bounds(img, region)
    if img.shape[2] == 1:
        return 0
    window = img[region.y : region.y + region.h, region.x : region.x + region.w]
    means = window.astype(np.float64).mean(axis=(0, 1))
    return int(np.argmin(means))


def apply_decoy(target: np.ndarray, decoy: Decoy, cell: Rect) -> np.ndarray:
    """Compose the decoy additively (with clamp) into the weakest channel of cell.

    Every pixel outside the cell, and every other channel inside it, is
    bit-identical to the target; the L-inf perturbation is bounded by 1/tau.
    """
    validate_image(target)
    if (decoy.width, decoy.height) != (cell.w, cell.h):
        raise DimensionError(
            f"decoy is {decoy.width}x{decoy.height} but cell is {cell.w}x{cell.h}"
        )
    check_bounds(target, cell)
    ch = weakest_channel(target, cell)
    out = target.copy()
    region = out[cell.y : cell.y + cell.h, cell.x : cell.x + cell.w, ch]
    out[cell.y : cell.y + cell.h, cell.x : cell.x + cell.w, ch] = np.clip(
        region + decoy.pixels, 0.0, 1.0
    )
    return out


def resize_decoy(decoy: Decoy, w: int, h: int) -> Decoy:
    """Bilinear resize of the decoy pattern; stays within [0, 1/tau]."""
    if (decoy.width, decoy.height) == (w, h):
        return decoy
    resized = resize(decoy.pixels[:, :, None], w, h)[:, :, 0]
    resized = np.minimum(resized, np.float32(1.0 / decoy.tau))
    return Decoy(
        pixels=resized,
        tau=decoy.tau,
        source_patch_id=decoy.source_patch_id,
        std=float(np.std(resized.astype(np.float64))),
    )


def gaussian_noise_image(w: int, h: int, std_255: float, seed: int) -> np.ndarray:
    """Single-channel folded Gaussian noise buffer, deterministic per seed.

    Zero-mean samples with std std_255/255 are folded by absolute value and
    clamped into [0, 1] with the same clamp used when composing decoys.
    """
    if std_255 <= 0:
        raise ParameterError(f"noise std must be positive, got {std_255}")
    if w <= 0 or h <= 0:
        raise DimensionError(f"noise dims must be positive, got {w}x{h}")
    rng = np.random.default_rng(seed)
    samples = rng.normal(0.0, std_255 / 255.0, size=(h, w, 1))
    return np.clip(np.abs(samples), 0.0, 1.0).astype(np.float32)


def flatten_to_gray(img: np.ndarray) -> np.ndarray:
    """Collapse channels by their mean; identity for 1-channel images."""
    validate_image(img)
    if img.shape[2] == 1:
        return img.copy()
    return img.astype(np.float64).mean(axis=2, keepdims=True).astype(np.float32)


def gray_to_rgb(img: np.ndarray) -> np.ndarray:
    """Replicate a single channel into RGB; identity for 3-channel images."""
    validate_image(img)
    if img.shape[2] == 3:
        return img.copy()
    return np.repeat(img, 3, axis=2)


def load_png(path) -> np.ndarray:
    """Read an 8-bit gray or RGB PNG into the [0, 1] float32 image format."""
    from PIL import Image as PILImage

    with PILImage.open(path) as im:
        if im.mode == "L":
            arr = np.asarray(im, dtype=np.float32)[:, :, None]
        else:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    return arr / np.float32(255.0)


def save_png(img: np.ndarray, path) -> None:
    """Write an image as an 8-bit gray or RGB PNG."""
    from PIL import Image as PILImage

    validate_image(img)
    data = np.clip(np.rint(img.astype(np.float64) * 255.0), 0, 255).astype(np.uint8)
    if img.shape[2] == 1:
        PILImage.fromarray(data[:, :, 0], mode="L").save(path, format="PNG")
    else:
        PILImage.fromarray(data, mode="RGB").save(path, format="PNG")


def png_bytes(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    save_png(img, buf)
    return buf.getvalue()


def load_png_bytes(data: bytes) -> np.ndarray:
    return load_png(io.BytesIO(data))


def write_pimg(img: np.ndarray, path) -> None:
    """Write the flat little-endian float32 exchange format (16-byte header)."""
    validate_image(img)
    h, w, c = img.shape
    header = struct.pack("<4sIII", PIMG_MAGIC, h, w, c)
    payload = np.ascontiguousarray(img, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header + payload)


def read_pimg(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:4] != PIMG_MAGIC:
        raise FormatError("not a PIMG buffer")
    _, h, w, c = struct.unpack("<4sIII", blob[:16])
    expected = 16 + h * w * c * 4
    if len(blob) != expected:
        raise FormatError(f"PIMG payload is {len(blob) - 16} bytes, expected {expected - 16}")
    arr = np.frombuffer(blob, dtype="<f4", offset=16).reshape(h, w, c)
    return validate_image(np.array(arr, dtype=np.float32))
