"""Grid-based derivative estimation and local-polynomial smoothing.

Finite-difference stencils of arbitrary order and accuracy are generated by
the Fornberg recursion; periodic axes can instead be differentiated spectrally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import Dataset, DatasetError

MAX_ORDER = 10
MAX_ACCURACY = 8


def fornberg_weights(x0: float, nodes, order: int) -> np.ndarray:
    """Weights approximating the order-th derivative at x0 from the given nodes."""
    nodes = np.asarray(nodes, dtype=float)
    n = nodes.size
    if n < order + 1:
        raise DatasetError(f"need at least {order + 1} nodes for derivative {order}")
    c = np.zeros((n, order + 1))
    c1 = 1.0
    c4 = nodes[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, order)
        c2 = 1.0
        c5 = c4
        c4 = nodes[i] - x0
        for j in range(i):
            c3 = nodes[i] - nodes[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order]


def _central_half_width(order: int, accuracy: int) -> int:
    return (order + 1) // 2 + (accuracy + 1) // 2 - 1


def fd_diff(values: np.ndarray, axis: int, spacing: float, order: int,
            accuracy: int = 4, periodic: bool = False) -> np.ndarray:
    """Finite-difference derivative along one axis of an array.

    Central stencils in the interior; periodic wraparound, or one-sided
    stencils of the same accuracy at non-periodic boundaries.
    """
    if order < 1 or order > MAX_ORDER:
        raise DatasetError(f"derivative order must be in 1..{MAX_ORDER}")
    if accuracy < 2 or accuracy % 2 or accuracy > MAX_ACCURACY:
        raise DatasetError(f"accuracy must be even and in 2..{MAX_ACCURACY}")
    m = values.shape[axis]
    width = order + accuracy
    if m < width:
        raise DatasetError(f"axis of length {m} too short for order {order} accuracy {accuracy}")
    half = _central_half_width(order, accuracy)
    offs = np.arange(-half, half + 1, dtype=float)
    wc = fornberg_weights(0.0, offs, order) / spacing**order

    f = np.moveaxis(values, axis, -1)
    out = np.empty_like(f, dtype=np.float64)
    if periodic:
        acc = np.zeros_like(f, dtype=np.float64)
        for s, w in zip(range(-half, half + 1), wc):
            acc += w * np.roll(f, -s, axis=-1)
        out[...] = acc
    else:
        out[..., half:m - half] = sliding_window_view(f, 2 * half + 1, axis=-1) @ wc
        for i in range(half):
            wl = fornberg_weights(float(i), np.arange(width, dtype=float), order)
            out[..., i] = f[..., :width] @ (wl / spacing**order)
            wr = fornberg_weights(float(width - 1 - i), np.arange(width, dtype=float), order)
            out[..., m - 1 - i] = f[..., m - width:] @ (wr / spacing**order)
    return np.moveaxis(out, -1, axis)


def spectral_diff(values: np.ndarray, axis: int, spacing: float, order: int) -> np.ndarray:
    """Spectral derivative on a periodic axis: rfft, multiply by (ik)^q, irfft.

    For even point counts and odd orders the Nyquist mode is zeroed.
    """
    if order < 1 or order > MAX_ORDER:
        raise DatasetError(f"derivative order must be in 1..{MAX_ORDER}")
    m = values.shape[axis]
    k = 2.0 * np.pi * np.fft.rfftfreq(m, d=spacing)
    mult = (1j * k) ** order
    if m % 2 == 0 and order % 2 == 1:
        mult[-1] = 0.0
    f = np.moveaxis(values, axis, -1)
    out = np.fft.irfft(np.fft.rfft(f, axis=-1) * mult, n=m, axis=-1)
    return np.moveaxis(out, -1, axis)


@dataclass(frozen=True)
class DerivativeSpec:
    field: str
    axis: str                      # 'x' | 'y' | 't'
    order: int
    method: str = "finite-difference"   # or 'spectral'
    fd_accuracy: int = 4

    def __post_init__(self):
        if self.axis not in ("x", "y", "t"):
            raise DatasetError(f"unknown axis {self.axis!r}")
        if self.order < 1:
            raise DatasetError("derivative order must be >= 1")


def _axis_index(dataset: Dataset, axis: str) -> tuple[int, float]:
    if axis == "t":
        return len(dataset.space_axes), dataset.time_axis.spacing
    i = {"x": 0, "y": 1}[axis]
    if i >= dataset.ndim_space:
        raise DatasetError(f"dataset has no axis {axis!r}")
    return i, dataset.space_axes[i].spacing


def fd_derivative(dataset: Dataset, spec: DerivativeSpec) -> np.ndarray:
    """Finite-difference derivative of a dataset field along one axis."""
    ax, spacing = _axis_index(dataset, spec.axis)
    periodic = (spec.axis != "t"
                and dataset.boundary[spec.field] == "periodic")
    return fd_diff(dataset.fields[spec.field], ax, spacing, spec.order,
                   spec.fd_accuracy, periodic=periodic)


def spectral_derivative(dataset: Dataset, spec: DerivativeSpec) -> np.ndarray:
    """Spectral derivative of a periodic field along one space axis."""
    if spec.axis == "t":
        raise DatasetError("spectral differentiation along time is not supported")
    if dataset.boundary[spec.field] != "periodic":
        raise DatasetError(f"field '{spec.field}' is not periodic")
    ax, spacing = _axis_index(dataset, spec.axis)
    return spectral_diff(dataset.fields[spec.field], ax, spacing, spec.order)


def time_derivative(dataset: Dataset, field: str) -> np.ndarray:
    """Second-order time derivative: central interior, one-sided at the ends."""
    if dataset.time_axis.count < 4:
        raise DatasetError("need at least 4 time slices")
    ax = len(dataset.space_axes)
    return fd_diff(dataset.fields[field], ax, dataset.time_axis.spacing, 1,
                   accuracy=2, periodic=False)


def _sg_kernel(offsets: np.ndarray, degree: int, position: float) -> np.ndarray:
    """Row mapping window samples to the local LS polynomial fit value at position."""
    V = np.vander(offsets - position, degree + 1, increasing=True)
    return np.linalg.pinv(V)[0]


def sg_smooth(values: np.ndarray, axis: int, window: int, degree: int) -> np.ndarray:
    """Moving local least-squares polynomial smoothing along one axis.

    Boundary windows shrink one-sidedly, with the fit degree capped at the
    shrunken window size minus one. window == 1 is the identity.
    """
    if window % 2 == 0 or window < 1:
        raise DatasetError("window must be odd and >= 1")
    if window == 1:
        return np.array(values, dtype=np.float64)
    if degree >= window:
        raise DatasetError("degree must be < window")
    m = values.shape[axis]
    if window > m:
        raise DatasetError(f"window {window} exceeds axis length {m}")
    h = (window - 1) // 2
    f = np.moveaxis(values, axis, -1)
    out = np.empty_like(f, dtype=np.float64)
    kern = _sg_kernel(np.arange(-h, h + 1, dtype=float), degree, 0.0)
    out[..., h:m - h] = sliding_window_view(f, window, axis=-1) @ kern
    for i in range(h):
        size = i + h + 1
        d = min(degree, size - 1)
        kb = _sg_kernel(np.arange(size, dtype=float), d, float(i))
        out[..., i] = f[..., :size] @ kb
        kb = _sg_kernel(np.arange(size, dtype=float), d, float(size - 1 - i))
        out[..., m - 1 - i] = f[..., m - size:] @ kb
    return np.moveaxis(out, -1, axis)


def smooth_field(dataset: Dataset, field: str, window: int, degree: int) -> np.ndarray:
    """Separable local-polynomial smoothing over every axis of a field."""
    out = dataset.fields[field]
    for ax in range(out.ndim):
        out = sg_smooth(out, ax, window, degree)
    return out
