from collections import deque

import numpy as np
import pytest

from regait.edgemap import (
    GrayImage,
    canny,
    edge_map_for_frame,
    load_edge_map,
    resize_bilinear,
    save_edge_map,
    to_grayscale,
)


def square_image(size=64, lo=16, hi=48, value=255.0):
    img = np.zeros((size, size))
    img[lo:hi, lo:hi] = value
    return GrayImage(img)


def border_distance(y, x, x0=15.5, x1=47.5, y0=15.5, y1=47.5):
    """Distance from a pixel center to the analytic square outline."""
    dx = max(x0 - x, 0.0, x - x1)
    dy = max(y0 - y, 0.0, y - y1)
    if dx > 0 or dy > 0:
        return float(np.hypot(dx, dy))
    return min(x - x0, x1 - x, y - y0, y1 - y)


def outside_cannot_reach(mask: np.ndarray, target: tuple[int, int]) -> bool:
    """4-connected flood fill from the corner, treating edges as walls."""
    free = ~mask
    seen = np.zeros_like(free)
    queue = deque([(0, 0)])
    seen[0, 0] = True
    h, w = mask.shape
    while queue:
        y, x = queue.popleft()
        for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            ny, nx = y + dy, x + dx
            if 0 <= ny < h and 0 <= nx < w and free[ny, nx] and not seen[ny, nx]:
                seen[ny, nx] = True
                queue.append((ny, nx))
    return not seen[target]


class TestGrayscale:
    def test_white_black_red(self):
        white = to_grayscale(np.full((1, 1, 3), 255, dtype=np.uint8))
        black = to_grayscale(np.zeros((1, 1, 3), dtype=np.uint8))
        red = to_grayscale(np.array([[[255, 0, 0]]], dtype=np.uint8))
        assert white.pixels[0, 0] == 255.0
        assert black.pixels[0, 0] == 0.0
        assert red.pixels[0, 0] == 76.0  # round(0.299 * 255)

    def test_zero_dimension_rejected(self):
        with pytest.raises(ValueError):
            to_grayscale(np.zeros((0, 4, 3), dtype=np.uint8))


class TestResize:
    def test_output_dimensions(self):
        img = GrayImage(np.zeros((720, 1280)))
        out = resize_bilinear(img, 512, 512)
        assert (out.width, out.height) == (512, 512)

    def test_identity_resize_is_exact(self):
        rng = np.random.default_rng(0)
        img = GrayImage(rng.uniform(0, 255, size=(9, 13)))
        out = resize_bilinear(img, 13, 9)
        assert np.array_equal(out.pixels, img.pixels)

    def test_checkerboard_2x2_to_4x4_hand_values(self):
        # Half-pixel-center mapping: output grid samples source coordinates
        # -0.25, 0.25, 0.75, 1.25 (clamped to [0, 1]) on each axis.
        img = GrayImage(np.array([[0.0, 255.0], [255.0, 0.0]]))
        out = resize_bilinear(img, 4, 4).pixels
        xs = np.clip((np.arange(4) + 0.5) * 0.5 - 0.5, 0, 1)
        expected = np.empty((4, 4))
        for i, sy in enumerate(xs):
            for j, sx in enumerate(xs):
                top = 0.0 * (1 - sx) + 255.0 * sx
                bottom = 255.0 * (1 - sx) + 0.0 * sx
                expected[i, j] = top * (1 - sy) + bottom * sy
        assert np.allclose(out, expected)
        # The four center pixels blend both source values; together they
        # average to the checkerboard mean.
        assert out[1:3, 1:3].mean() == pytest.approx(127.5)

    def test_positive_target_required(self):
        with pytest.raises(ValueError):
            resize_bilinear(GrayImage(np.zeros((4, 4))), 0, 4)


class TestCanny:
    def test_uniform_image_has_no_edges(self):
        assert not canny(GrayImage(np.full((64, 64), 77.0))).mask.any()

    def test_square_contour_geometry(self):
        edge = canny(square_image())
        ys, xs = np.nonzero(edge.mask)
        assert len(ys) > 0
        distances = [border_distance(y, x) for y, x in zip(ys, xs)]
        assert max(distances) <= 1.0  # tighter than the 2 px cap
        assert outside_cannot_reach(edge.mask, (31, 31))

    def test_square_contour_is_thin(self):
        mask = canny(square_image()).mask
        # No 3x3 window fully edge-filled.
        interior = (
            mask[:-2, :-2] & mask[:-2, 1:-1] & mask[:-2, 2:]
            & mask[1:-1, :-2] & mask[1:-1, 1:-1] & mask[1:-1, 2:]
            & mask[2:, :-2] & mask[2:, 1:-1] & mask[2:, 2:]
        )
        assert not interior.any()
        # Away from the corners, each row crosses the left and right border
        # exactly once.
        for row in range(20, 44):
            assert mask[row, :32].sum() == 1
            assert mask[row, 32:].sum() == 1

    def test_high_threshold_above_peak_gives_empty_map(self):
        assert not canny(square_image(), 100.0, 1e9).mask.any()

    def test_constant_offset_invariance(self):
        base = square_image(value=180.0).pixels
        e1 = canny(GrayImage(base + 20.0))
        e2 = canny(GrayImage(base + 60.0))
        assert np.array_equal(e1.mask, e2.mask)

    def test_deterministic(self):
        a = canny(square_image())
        b = canny(square_image())
        assert np.array_equal(a.mask, b.mask)

    def test_border_ring_never_edges(self):
        img = GrayImage(np.tile(np.linspace(0, 255, 64), (64, 1)))
        mask = canny(img, 1.0, 2.0).mask
        assert not mask[0, :].any() and not mask[-1, :].any()
        assert not mask[:, 0].any() and not mask[:, -1].any()

    def test_threshold_ordering_enforced(self):
        with pytest.raises(ValueError):
            canny(square_image(), 200.0, 100.0)

    def test_image_smaller_than_kernel_rejected(self):
        with pytest.raises(ValueError):
            canny(GrayImage(np.zeros((4, 4))))


class TestIo:
    def test_png_round_trip(self, tmp_path):
        edge = canny(square_image())
        path = save_edge_map(edge, tmp_path / "edge.png")
        back = load_edge_map(path)
        assert np.array_equal(back.mask, edge.mask)

    def test_frame_pipeline_produces_target_size(self):
        rng = np.random.default_rng(1)
        rgb = rng.integers(0, 255, size=(72, 128, 3), dtype=np.uint8)
        for before in (False, True):
            edge = edge_map_for_frame(rgb, target_size=96, canny_before_resize=before)
            assert (edge.width, edge.height) == (96, 96)
