"""Convolution kernel backend selection.

The compiled Cython extension is preferred; the numpy fallback is picked up
automatically when the extension was not built.  Both expose the same three
functions with the same contracts; each backend is deterministic on its own.
"""

try:
    from bimoe._kernels._convext import (  # type: ignore[attr-defined]
        conv1d_backward_input,
        conv1d_backward_kernels,
        conv1d_forward,
    )

    BACKEND = "cython"
except ImportError:
    from bimoe._kernels._convnp import (
        conv1d_backward_input,
        conv1d_backward_kernels,
        conv1d_forward,
    )

    BACKEND = "numpy"

__all__ = [
    "BACKEND",
    "conv1d_forward",
    "conv1d_backward_input",
    "conv1d_backward_kernels",
]
