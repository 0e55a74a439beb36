"""Real Morlet filter bank and the multi-scale decomposition loss."""

import numpy as np

from . import autodiff as ad
from .errors import ConfigError


def morlet_kernel(scale: float, kernel_len: int) -> np.ndarray:
    """Unit-norm real Morlet taps cos(t/s)*exp(-t^2/2s^2) on an integer grid.

    The grid runs -floor(K/2) .. ceil(K/2)-1 so the K=2m case keeps t=0 at
    index m.
    """
    if scale <= 0:
        raise ConfigError(f"scale must be positive, got {scale}")
    if kernel_len < 1:
        raise ConfigError("kernel_len must be >= 1")
    half = kernel_len // 2
    tau = np.arange(-half, kernel_len - half, dtype=np.float64)
    k = np.cos(tau / scale) * np.exp(-(tau * tau) / (2.0 * scale * scale))
    return ad.l2_normalize(k)


class WaveletBank:
    """Stacked (S,K) Morlet kernels; optionally learnable."""

    def __init__(self, scales, kernels: ad.Tensor, learnable: bool):
        self.scales = tuple(float(s) for s in scales)
        self.kernels = kernels
        self.learnable = bool(learnable)

    @property
    def num_scales(self) -> int:
        return len(self.scales)

    @property
    def kernel_len(self) -> int:
        return self.kernels.data.shape[1]

    def renormalize(self):
        """Project each kernel row back onto the unit sphere (post-update)."""
        self.kernels.data = ad.l2_normalize(self.kernels.data)


def build_bank(scales, learnable: bool = False) -> WaveletBank:
    """Bank over the given scales; tap count is 4x the largest scale."""
    scales = list(scales)
    if not scales:
        raise ConfigError("at least one scale is required")
    if len(set(scales)) != len(scales):
        raise ConfigError(f"duplicate scales: {scales}")
    kernel_len = int(round(4 * max(scales)))
    rows = np.stack([morlet_kernel(s, kernel_len) for s in scales])
    kernels = ad.Tensor(rows, requires_grad=learnable)
    return WaveletBank(scales, kernels, learnable)


def dwt(x: ad.Tensor, bank: WaveletBank) -> ad.Tensor:
    """Length-preserving (B,C,L) -> (B,C,S,L) decomposition."""
    return ad.dwt(x, bank.kernels)


def wavelet_loss(xhat: ad.Tensor, x: ad.Tensor, bank: WaveletBank) -> ad.Tensor:
    """Sum over scales of per-scale mean squared coefficient error.

    All scale slices share the same element count, so the sum equals
    S * mse over the full (B,C,S,L) stack.
    """
    d_hat = dwt(xhat, bank)
    d_ref = dwt(x, bank)
    return ad.scale(ad.mse(d_hat, d_ref), float(bank.num_scales))
