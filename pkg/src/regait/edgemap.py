"""Native Canny edge detection producing the conditioning image for the
generation backend.

Pipeline: Gaussian blur -> Sobel gradients -> non-maximum suppression with
the gradient direction quantized to 4 bins -> hysteresis (strong seeds,
8-connected weak growth). Everything is plain numpy; results are
deterministic and frames can be processed in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

# Common Canny defaults; exposed through config since the detector is named
# without parameters anywhere upstream.
DEFAULT_LOW_THRESHOLD = 100.0
DEFAULT_HIGH_THRESHOLD = 200.0
DEFAULT_SIGMA = 1.4
DEFAULT_KERNEL_SIZE = 5
CONDITIONING_SIZE = 512  # generation backends expect square 512 x 512 input


@dataclass(frozen=True)
class GrayImage:
    """Single-channel image, row-major, intensities in [0, 255]."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=float)
        if px.ndim != 2 or px.size == 0:
            raise ValueError(f"grayscale image must be non-empty 2-D, got shape {px.shape}")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class EdgeMap:
    """Binary edge mask with the same dimensions as its source image."""

    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        if m.ndim != 2 or m.size == 0:
            raise ValueError(f"edge mask must be non-empty 2-D, got shape {m.shape}")
        object.__setattr__(self, "mask", m)

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def width(self) -> int:
        return self.mask.shape[1]


def to_grayscale(rgb: np.ndarray) -> GrayImage:
    """8-bit RGB to luma: round(0.299 R + 0.587 G + 0.114 B)."""
    arr = np.asarray(rgb)
    if arr.ndim != 3 or arr.shape[2] < 3 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError(f"expected non-empty (h, w, 3) RGB array, got shape {arr.shape}")
    arr = arr[:, :, :3].astype(float)
    luma = 0.299 * arr[:, :, 0] + 0.587 * arr[:, :, 1] + 0.114 * arr[:, :, 2]
    return GrayImage(np.rint(luma))


def _resize_plane(plane: np.ndarray, target_w: int, target_h: int) -> np.ndarray:
    """Bilinear resample with half-pixel-center alignment, so resizing to the
    source size is the identity."""
    src_h, src_w = plane.shape
    ys = (np.arange(target_h) + 0.5) * (src_h / target_h) - 0.5
    xs = (np.arange(target_w) + 0.5) * (src_w / target_w) - 0.5
    ys = np.clip(ys, 0.0, src_h - 1.0)
    xs = np.clip(xs, 0.0, src_w - 1.0)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, src_h - 1)
    x1 = np.minimum(x0 + 1, src_w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = plane[np.ix_(y0, x0)] * (1 - wx) + plane[np.ix_(y0, x1)] * wx
    bottom = plane[np.ix_(y1, x0)] * (1 - wx) + plane[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bottom * wy


def resize_bilinear(image: GrayImage, target_w: int, target_h: int) -> GrayImage:
    if target_w <= 0 or target_h <= 0:
        raise ValueError(f"target size must be positive, got {target_w}x{target_h}")
    if (target_h, target_w) == image.pixels.shape:
        return GrayImage(image.pixels.copy())
    return GrayImage(_resize_plane(image.pixels, target_w, target_h))


def gaussian_kernel1d(sigma: float, size: int) -> np.ndarray:
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if size < 3 or size % 2 == 0:
        raise ValueError(f"kernel size must be an odd integer >= 3, got {size}")
    offsets = np.arange(size) - size // 2
    kernel = np.exp(-(offsets**2) / (2.0 * sigma**2))
    return kernel / kernel.sum()


def _convolve_rows(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    half = len(kernel) // 2
    padded = np.pad(img, ((0, 0), (half, half)), mode="edge")
    out = np.zeros_like(img)
    for k, w in enumerate(kernel):
        out += w * padded[:, k : k + img.shape[1]]
    return out


def gaussian_blur(img: np.ndarray, sigma: float, size: int) -> np.ndarray:
    kernel = gaussian_kernel1d(sigma, size)
    return _convolve_rows(_convolve_rows(img, kernel).T, kernel).T


def sobel_gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """3x3 Sobel with clamp-to-edge padding; returns (gx, gy)."""
    p = np.pad(img, 1, mode="edge")
    h, w = img.shape
    c = lambda dy, dx: p[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
    gx = (c(-1, 1) + 2 * c(0, 1) + c(1, 1)) - (c(-1, -1) + 2 * c(0, -1) + c(1, -1))
    gy = (c(1, -1) + 2 * c(1, 0) + c(1, 1)) - (c(-1, -1) + 2 * c(-1, 0) + c(-1, 1))
    return gx, gy


def _nonmax_suppress(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Keep only local maxima along the quantized gradient direction.

    Ties across a symmetric 2-pixel ridge are broken deterministically
    (strict comparison against the negative-offset neighbor) so blurred step
    edges thin to a single pixel.
    """
    angle = np.degrees(np.arctan2(gy, gx)) % 180.0
    bins = np.zeros(mag.shape, dtype=np.uint8)  # 0: E-W, 1: diag down-right, 2: N-S, 3: diag down-left
    bins[(angle >= 22.5) & (angle < 67.5)] = 1
    bins[(angle >= 67.5) & (angle < 112.5)] = 2
    bins[(angle >= 112.5) & (angle < 157.5)] = 3

    padded = np.pad(mag, 1, mode="constant", constant_values=-1.0)
    h, w = mag.shape
    sh = lambda dy, dx: padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
    offsets = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (1, -1)}
    keep = np.zeros(mag.shape, dtype=bool)
    for b, (dy, dx) in offsets.items():
        sel = bins == b
        keep |= sel & (mag >= sh(dy, dx)) & (mag > sh(-dy, -dx))
    return np.where(keep, mag, 0.0)


def _hysteresis(mag: np.ndarray, low: float, high: float) -> np.ndarray:
    strong = mag >= high
    weak = mag >= low
    reached = strong.copy()
    frontier = strong
    shifts = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
    while frontier.any():
        grown = np.zeros_like(reached)
        for dy, dx in shifts:
            shifted = np.zeros_like(reached)
            ys = slice(max(dy, 0), reached.shape[0] + min(dy, 0))
            yd = slice(max(-dy, 0), reached.shape[0] + min(-dy, 0))
            xs = slice(max(dx, 0), reached.shape[1] + min(dx, 0))
            xd = slice(max(-dx, 0), reached.shape[1] + min(-dx, 0))
            shifted[yd, xd] = frontier[ys, xs]
            grown |= shifted
        frontier = grown & weak & ~reached
        reached |= frontier
    return reached


def canny(
    gray: GrayImage,
    low_threshold: float = DEFAULT_LOW_THRESHOLD,
    high_threshold: float = DEFAULT_HIGH_THRESHOLD,
    gaussian_sigma: float = DEFAULT_SIGMA,
    kernel_size: int = DEFAULT_KERNEL_SIZE,
) -> EdgeMap:
    """Canny edge detection on a grayscale image.

    Thresholds apply to the L2 gradient magnitude of the unnormalized 3x3
    Sobel response. Blur and Sobel use clamp-to-edge padding, and the
    outermost 1-pixel ring is never reported as edge so frame boundaries do
    not leak into the conditioning image.
    """
    if not 0 < low_threshold <= high_threshold:
        raise ValueError(
            f"need 0 < low <= high, got low={low_threshold}, high={high_threshold}"
        )
    img = gray.pixels
    if img.shape[0] < kernel_size or img.shape[1] < kernel_size:
        raise ValueError(
            f"image {img.shape} smaller than the {kernel_size}x{kernel_size} blur kernel"
        )
    # Gradients are offset-free mathematically; subtracting the minimum makes
    # constant illumination shifts cancel bit-exactly in float too.
    img = img - img.min()
    blurred = gaussian_blur(img, gaussian_sigma, kernel_size)
    gx, gy = sobel_gradients(blurred)
    mag = np.hypot(gx, gy)
    nms = _nonmax_suppress(mag, gx, gy)
    mask = _hysteresis(nms, low_threshold, high_threshold)
    mask[0, :] = mask[-1, :] = False
    mask[:, 0] = mask[:, -1] = False
    return EdgeMap(mask)


def resize_edge_map(edge: EdgeMap, target_w: int, target_h: int) -> EdgeMap:
    """Resize a binary mask by bilinear resampling then re-thresholding."""
    plane = _resize_plane(edge.mask.astype(float) * 255.0, target_w, target_h)
    return EdgeMap(plane >= 127.5)


# ---------------------------------------------------------------------------
# Image file IO (PNG, 8-bit)

def load_rgb(path: str | Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def save_edge_map(edge: EdgeMap, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.where(edge.mask, 255, 0).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path, format="PNG")
    return path


def load_edge_map(path: str | Path) -> EdgeMap:
    with Image.open(path) as img:
        data = np.asarray(img.convert("L"))
    return EdgeMap(data >= 128)


def edge_map_for_frame(
    rgb: np.ndarray,
    target_size: int = CONDITIONING_SIZE,
    low_threshold: float = DEFAULT_LOW_THRESHOLD,
    high_threshold: float = DEFAULT_HIGH_THRESHOLD,
    gaussian_sigma: float = DEFAULT_SIGMA,
    kernel_size: int = DEFAULT_KERNEL_SIZE,
    canny_before_resize: bool = False,
) -> EdgeMap:
    """Full conditioning-image path for one frame.

    Default order is rescale-then-detect, matching the generation backend's
    input size; ``canny_before_resize`` detects at native resolution and
    rescales the binary mask instead.
    """
    gray = to_grayscale(rgb)
    kwargs = dict(
        low_threshold=low_threshold,
        high_threshold=high_threshold,
        gaussian_sigma=gaussian_sigma,
        kernel_size=kernel_size,
    )
    if canny_before_resize:
        edge = canny(gray, **kwargs)
        return resize_edge_map(edge, target_size, target_size)
    resized = resize_bilinear(gray, target_size, target_size)
    return canny(resized, **kwargs)
