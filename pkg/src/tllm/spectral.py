"""Real FFT and complex-spectrum arithmetic on the autodiff tape.

Convention: unnormalized forward DFT, non-redundant half retained. For a
length-d real signal the spectrum has floor(d/2)+1 coefficients. All
spectral formulas elsewhere in the package assume this convention.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .tensor import Tensor, tsqrt

MAGNITUDE_EPS = 1e-12  # keeps sqrt differentiable at exactly-zero coefficients


@dataclass
class ComplexSpectrum:
    """Complex array stored as separate real/imaginary tensors."""

    re: Tensor
    im: Tensor

    @property
    def shape(self) -> tuple:
        return self.re.shape

    def detach(self) -> "ComplexSpectrum":
        return ComplexSpectrum(self.re.detach(), self.im.detach())


def half_length(d: int) -> int:
    return d // 2 + 1


def _rfft_adjoint(g: np.ndarray, d: int, axis: int, imag: bool) -> np.ndarray:
    # adjoint of the unnormalized rFFT viewed as a real-linear map:
    # grad_x = d * Re(ifft(zero-padded cotangent)) along `axis`
    shape = list(g.shape)
    shape[axis] = d
    h = np.zeros(shape, dtype=np.complex128)
    idx = [slice(None)] * g.ndim
    idx[axis] = slice(0, g.shape[axis])
    h[tuple(idx)] = 1j * g if imag else g
    return (d * np.real(np.fft.ifft(h, axis=axis))).astype(g.dtype)


def rfft(x: Tensor, axis: int = -1) -> ComplexSpectrum:
    """Unnormalized forward real FFT along `axis`; differentiable."""
    d = x.data.shape[axis]
    if d < 2:
        raise ShapeError(f"rfft needs axis extent >= 2, got {d}")
    spec = np.fft.rfft(x.data, axis=axis)
    re_data = np.ascontiguousarray(spec.real).astype(x.data.dtype)
    im_data = np.ascontiguousarray(spec.imag).astype(x.data.dtype)

    def backward_re(g):
        x._accum(_rfft_adjoint(g, d, axis, imag=False))

    def backward_im(g):
        x._accum(_rfft_adjoint(g, d, axis, imag=True))

    re = Tensor._node(re_data, (x,), backward_re)
    im = Tensor._node(im_data, (x,), backward_im)
    return ComplexSpectrum(re, im)


def irfft(spec: ComplexSpectrum, n: int, axis: int = -1) -> Tensor:
    """Inverse of rfft (forward-only; the model's spectral path never inverts)."""
    if spec.re.requires_grad or spec.im.requires_grad:
        raise NotImplementedError("irfft has no backward pass; detach the spectrum first")
    z = spec.re.data.astype(np.complex128) + 1j * spec.im.data.astype(np.complex128)
    out = np.fft.irfft(z, n=n, axis=axis)
    return Tensor(out.astype(spec.re.data.dtype), dtype=spec.re.data.dtype)


def cs_add(a: ComplexSpectrum, b: ComplexSpectrum) -> ComplexSpectrum:
    return ComplexSpectrum(a.re + b.re, a.im + b.im)


def cs_mul(a: ComplexSpectrum, b: ComplexSpectrum) -> ComplexSpectrum:
    """Elementwise complex product."""
    return ComplexSpectrum(a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re)


def cs_scale(a: ComplexSpectrum, m: Tensor) -> ComplexSpectrum:
    """Elementwise multiply both parts by a real tensor (e.g. a 0/1 mask)."""
    return ComplexSpectrum(a.re * m, a.im * m)


def cs_project(a: ComplexSpectrum, w: Tensor) -> ComplexSpectrum:
    """Real linear map applied independently to real and imaginary parts."""
    return ComplexSpectrum(a.re @ w, a.im @ w)


def cs_power(a: ComplexSpectrum) -> Tensor:
    """Per-coefficient power |F|^2."""
    return a.re * a.re + a.im * a.im


def cs_magnitude(a: ComplexSpectrum, eps: float = MAGNITUDE_EPS) -> Tensor:
    return tsqrt(cs_power(a) + eps)


def threshold_mask(power: Tensor, theta: Tensor, tau: float = 1.0) -> Tensor:
    """Hard indicator (power > theta) with a straight-through backward for theta.

    Forward is the exact 0/1 mask. The threshold receives the gradient of
    the smooth surrogate sigmoid((power - theta) / tau); with respect to
    the power side the mask is treated as the piecewise constant it is, so
    every other parameter stays finite-difference checkable.
    """
    mask = (power.data > theta.data).astype(power.data.dtype)

    def backward(g):
        z = (power.data - theta.data) / tau
        s = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                     np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
        ds = s * (1.0 - s) / tau
        from .tensor import _unbroadcast

        theta._accum(_unbroadcast(-(g * ds), theta.data.shape))

    return Tensor._node(mask, (power, theta), backward)
