"""Native signal primitives: natural cubic splines and zero-phase
Butterworth low-pass filtering.

Both are implemented from first principles so the numeric path carries no
external dependency; the test suite verifies them against independent
reference implementations.
"""

from __future__ import annotations

import numpy as np

from .errors import EmptySeriesError


# ---------------------------------------------------------------------------
# Natural cubic spline (zero second derivative at both ends)

class NaturalCubicSpline:
    """Interpolating cubic spline with natural boundary conditions.

    Knots may be non-uniform but must be strictly increasing. The second
    derivatives are obtained from the classic tridiagonal system solved with
    the Thomas algorithm.
    """

    def __init__(self, t: np.ndarray, y: np.ndarray):
        t = np.asarray(t, dtype=float)
        y = np.asarray(y, dtype=float)
        if t.ndim != 1 or t.shape != y.shape:
            raise ValueError("knots and values must be equal-length 1-D arrays")
        if len(t) < 2:
            raise EmptySeriesError("spline needs at least 2 knots")
        if np.any(np.diff(t) <= 0):
            raise ValueError("knots must be strictly increasing")
        self.t = t
        self.y = y
        self.m2 = self._second_derivatives(t, y)

    @staticmethod
    def _second_derivatives(t: np.ndarray, y: np.ndarray) -> np.ndarray:
        n = len(t)
        m2 = np.zeros(n)
        if n == 2:
            return m2
        h = np.diff(t)
        # Interior equations: h[i-1] M[i-1] + 2(h[i-1]+h[i]) M[i] + h[i] M[i+1] = rhs
        diag = 2.0 * (h[:-1] + h[1:])
        lower = h[:-1].copy()
        upper = h[1:].copy()
        rhs = 6.0 * ((y[2:] - y[1:-1]) / h[1:] - (y[1:-1] - y[:-2]) / h[:-1])
        # Thomas algorithm; natural ends keep M[0] = M[n-1] = 0 so the first
        # lower and last upper coefficients never enter.
        k = n - 2
        cp = np.zeros(k)
        dp = np.zeros(k)
        cp[0] = upper[0] / diag[0]
        dp[0] = rhs[0] / diag[0]
        for i in range(1, k):
            denom = diag[i] - lower[i] * cp[i - 1]
            cp[i] = upper[i] / denom if i < k - 1 else 0.0
            dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / denom
        sol = np.zeros(k)
        sol[-1] = dp[-1]
        for i in range(k - 2, -1, -1):
            sol[i] = dp[i] - cp[i] * sol[i + 1]
        m2[1:-1] = sol
        return m2

    def __call__(self, tq: np.ndarray | float) -> np.ndarray | float:
        scalar = np.isscalar(tq)
        tq = np.atleast_1d(np.asarray(tq, dtype=float))
        t, y, m2 = self.t, self.y, self.m2
        idx = np.clip(np.searchsorted(t, tq, side="right") - 1, 0, len(t) - 2)
        h = t[idx + 1] - t[idx]
        a = (t[idx + 1] - tq) / h
        b = (tq - t[idx]) / h
        vals = (
            a * y[idx]
            + b * y[idx + 1]
            + ((a**3 - a) * m2[idx] + (b**3 - b) * m2[idx + 1]) * h**2 / 6.0
        )
        return float(vals[0]) if scalar else vals


def fill_gaps(
    values: np.ndarray, valid: np.ndarray, max_gap: int
) -> tuple[np.ndarray, np.ndarray]:
    """Fill interior invalid runs of length <= ``max_gap`` with a natural
    cubic spline fitted to the valid samples.

    Leading and trailing gaps are never filled (no extrapolation) and valid
    samples pass through bit-identical. Returns (filled values, mask of
    newly filled samples). Raises :class:`EmptySeriesError` with fewer than
    4 valid samples.
    """
    values = np.asarray(values, dtype=float)
    valid = np.asarray(valid, dtype=bool)
    if values.shape != valid.shape or values.ndim != 1:
        raise ValueError("values and valid must be equal-length 1-D arrays")
    n_valid = int(valid.sum())
    if n_valid < 4:
        raise EmptySeriesError(f"need >=4 valid samples to build a spline, got {n_valid}")
    filled = values.copy()
    filled_mask = np.zeros_like(valid)
    if valid.all() or max_gap <= 0:
        return filled, filled_mask

    frames = np.arange(len(values))
    first, last = frames[valid][0], frames[valid][-1]
    spline: NaturalCubicSpline | None = None
    i = 0
    while i < len(values):
        if valid[i]:
            i += 1
            continue
        j = i
        while j < len(values) and not valid[j]:
            j += 1
        run = np.arange(i, j)
        interior = i > first and j - 1 < last
        if interior and len(run) <= max_gap:
            if spline is None:
                spline = NaturalCubicSpline(frames[valid], values[valid])
            filled[run] = spline(run.astype(float))
            filled_mask[run] = True
        i = j
    return filled, filled_mask


# ---------------------------------------------------------------------------
# Butterworth low-pass as cascaded second-order sections

def butterworth_sos(order: int, cutoff_hz: float, sample_rate: float) -> np.ndarray:
    """Design a digital Butterworth low-pass via the bilinear transform with
    frequency prewarping; returns (order/2, 6) second-order sections
    ``[b0, b1, b2, 1, a1, a2]``, each normalized to unit DC gain."""
    if order <= 0 or order % 2 != 0:
        raise ValueError(f"order must be a positive even integer, got {order}")
    if not 0 < cutoff_hz < sample_rate / 2:
        raise ValueError(
            f"cutoff {cutoff_hz} Hz must lie in (0, Nyquist={sample_rate / 2} Hz)"
        )
    wc = 2.0 * sample_rate * np.tan(np.pi * cutoff_hz / sample_rate)
    k2 = (2.0 * sample_rate) ** 2
    sections = []
    for k in range(order // 2):
        theta = np.pi * (2 * k + order + 1) / (2 * order)
        pole = wc * np.exp(1j * theta)
        a1s = -2.0 * pole.real
        a0s = abs(pole) ** 2
        d0 = k2 + a1s * 2.0 * sample_rate + a0s
        d1 = 2.0 * a0s - 2.0 * k2
        d2 = k2 - a1s * 2.0 * sample_rate + a0s
        b0 = wc**2 / d0
        sections.append([b0, 2.0 * b0, b0, 1.0, d1 / d0, d2 / d0])
    return np.asarray(sections)


def _sos_steady_state(sos: np.ndarray) -> np.ndarray:
    """Per-section internal state for a sustained unit input (direct form II
    transposed), so a constant series passes through without transient."""
    zi = np.zeros((len(sos), 2))
    gain_in = 1.0
    for s, (b0, b1, b2, _, a1, a2) in enumerate(sos):
        dc = (b0 + b1 + b2) / (1.0 + a1 + a2)
        zi[s, 0] = gain_in * (dc - b0)
        zi[s, 1] = gain_in * (b2 - a2 * dc)
        gain_in *= dc
    return zi


def sosfilt(sos: np.ndarray, x: np.ndarray, zi: np.ndarray | None = None) -> np.ndarray:
    """Single forward pass through the section cascade."""
    y = np.asarray(x, dtype=float).copy()
    state = np.zeros((len(sos), 2)) if zi is None else np.array(zi, dtype=float)
    for s, (b0, b1, b2, _, a1, a2) in enumerate(sos):
        z1, z2 = state[s]
        out = np.empty_like(y)
        for i, xi in enumerate(y):
            yi = b0 * xi + z1
            z1 = b1 * xi - a1 * yi + z2
            z2 = b2 * xi - a2 * yi
            out[i] = yi
        y = out
    return y


def lowpass(
    series: np.ndarray,
    sample_rate: float,
    cutoff_hz: float,
    order: int = 4,
    zero_phase: bool = True,
) -> np.ndarray:
    """Butterworth low-pass over a fully valid series.

    Zero-phase mode runs the cascade forward and backward over the series
    extended by odd-reflection padding of length ``3 * order``, which keeps
    edges from ringing while adding no lag. Note the double pass squares the
    magnitude response, so the gain at the nominal cutoff becomes 0.5; no
    cutoff correction is applied.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ValueError("series must be 1-D")
    sos = butterworth_sos(order, cutoff_hz, sample_rate)
    if not zero_phase:
        return sosfilt(sos, x, zi=_sos_steady_state(sos) * (x[0] if len(x) else 0.0))
    padlen = 3 * order
    if len(x) <= padlen:
        raise EmptySeriesError(
            f"zero-phase filtering needs more than {padlen} samples, got {len(x)}"
        )
    head = 2.0 * x[0] - x[1 : padlen + 1][::-1]
    tail = 2.0 * x[-1] - x[-padlen - 1 : -1][::-1]
    ext = np.concatenate([head, x, tail])
    zi = _sos_steady_state(sos)
    y = sosfilt(sos, ext, zi=zi * ext[0])
    y = sosfilt(sos, y[::-1], zi=zi * y[-1])[::-1]
    return y[padlen : len(y) - padlen]
