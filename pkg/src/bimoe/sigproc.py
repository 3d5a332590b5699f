"""Signal preprocessing: band-pass filtering, resampling, windowing, z-score.

The band-pass is an order-3 analog Butterworth prototype taken through the
bilinear transform with frequency pre-warping (discrete order 6), stored as
stable second-order sections and applied causally with zero initial
conditions.  EEG channels are filtered; peripheral channels are not (they are
only z-scored downstream).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal


@dataclass(frozen=True)
class FilterSpec:
    """Second-order-section cascade for one designed filter."""

    sos: np.ndarray  # (n_sections, 6) rows [b0 b1 b2 1 a1 a2]
    sample_rate: float
    band: tuple  # (low, high) in Hz, or (0, cutoff) for the anti-alias low-pass
    prototype_order: int = 3

    def is_stable(self):
        poles = np.concatenate([np.roots(sec[3:]) for sec in self.sos])
        return bool(np.all(np.abs(poles) < 1.0))

    def response_at(self, freq_hz):
        """Transfer-function magnitude on the unit circle at ``freq_hz``."""
        w = 2 * np.pi * np.asarray(freq_hz, dtype=float) / self.sample_rate
        z = np.exp(1j * w)
        h = np.ones_like(z)
        for b0, b1, b2, a0, a1, a2 in self.sos:
            h *= (b0 + b1 / z + b2 / z**2) / (a0 + a1 / z + a2 / z**2)
        return np.abs(h)


def design_bandpass(low: float = 4.0, high: float = 45.0, fs: float = 128.0,
                    order: int = 3) -> FilterSpec:
    """Order-``order`` Butterworth band-pass between ``low`` and ``high`` Hz."""
    if not 0 < low < high:
        raise ValueError(f"need 0 < low < high, got low={low}, high={high}")
    if high >= fs / 2:
        raise ValueError(f"high edge {high} Hz must be below Nyquist {fs / 2} Hz")
    sos = signal.butter(order, [low, high], btype="bandpass", fs=fs, output="sos")
    return FilterSpec(sos=sos, sample_rate=fs, band=(low, high), prototype_order=order)


def design_lowpass(cutoff: float, fs: float, order: int = 3) -> FilterSpec:
    if not 0 < cutoff < fs / 2:
        raise ValueError(f"cutoff {cutoff} Hz must lie in (0, {fs / 2}) Hz")
    sos = signal.butter(order, cutoff, btype="lowpass", fs=fs, output="sos")
    return FilterSpec(sos=sos, sample_rate=fs, band=(0.0, cutoff), prototype_order=order)


def apply_filter(x, spec: FilterSpec):
    """Causal forward-only filtering along the last axis, zero initial state."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < 16:
        raise ValueError(f"series too short to filter: length {x.shape[-1]} < 16")
    return signal.sosfilt(spec.sos, x, axis=-1)


def resample_half(x):
    """Halve the sample rate: anti-alias low-pass at 0.45 of the target rate,
    then keep every second sample."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    if n % 2:
        raise ValueError(f"resample_half needs an even length, got {n}")
    # rates are relative, so design against a nominal input rate of 2.0
    spec = design_lowpass(cutoff=0.45, fs=2.0)
    return apply_filter(x, spec)[..., ::2]


def segment_windows(trial, fs: float, window_seconds: float = 1.0,
                    skip_seconds: float = 0.0):
    """Tile non-overlapping windows over [skip, end); drop the trailing partial."""
    trial = np.asarray(trial, dtype=np.float64)
    win = int(round(fs * window_seconds))
    skip = int(round(fs * skip_seconds))
    usable = trial.shape[-1] - skip
    count = usable // win
    if count < 1:
        raise ValueError(
            f"trial of {trial.shape[-1]} samples leaves no full window "
            f"after skipping {skip}")
    return [trial[..., skip + i * win: skip + (i + 1) * win] for i in range(count)]


def zscore(window, eps: float = 1e-8):
    """Per-channel standardization; channels with ~zero spread map to zeros."""
    window = np.asarray(window, dtype=np.float64)
    if window.shape[-1] < 2:
        raise ValueError("zscore needs at least 2 samples per channel")
    mean = window.mean(axis=-1, keepdims=True)
    std = window.std(axis=-1, keepdims=True)
    out = np.where(std < eps, 0.0, (window - mean) / np.where(std < eps, 1.0, std))
    return out
