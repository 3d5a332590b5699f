"""Vectorized numpy implementation of the 1-D convolution kernels.

Used when the compiled extension is unavailable.  All arrays are float64,
C-contiguous; input is (B, C_in, T), kernels (C_out, C_in, K) with K odd,
stride 1 and "same" zero padding of (K-1)//2.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _padded_windows(x, k):
    pad = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    return sliding_window_view(xp, k, axis=-1)  # (B, C, T, K)


def conv1d_forward(x, kernels, bias):
    windows = _padded_windows(x, kernels.shape[-1])
    out = np.einsum("bitk,oik->bot", windows, kernels, optimize=True)
    out += bias[None, :, None]
    return out


def conv1d_backward_input(grad_out, kernels):
    # grad_x[b,i,t] = sum_{o,j} kernels[o,i,j] * grad_out[b,o,t+pad-j]
    windows = _padded_windows(grad_out, kernels.shape[-1])
    return np.einsum("botk,oik->bit", windows, kernels[:, :, ::-1], optimize=True)


def conv1d_backward_kernels(grad_out, x, k):
    windows = _padded_windows(x, k)
    return np.einsum("bitk,bot->oik", windows, grad_out, optimize=True)
