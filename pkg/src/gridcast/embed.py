"""Instance normalization, tail padding, patching, and grid embedding.

A lookback window X in R^{T x N} becomes a grid of patch tokens in
R^{M x N x D}: per-variate zero-mean/unit-std normalization, tail padding so
exactly M = ceil((T - P) / S) + 2 patches of length P at stride S fit, then a
shared linear projection plus an additive learned position encoding over the
patch axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from gridcast.errors import ConfigError, ShapeError
from gridcast.tensor import Tensor

STD_FLOOR = 1e-5


@dataclass
class NormStats:
    """Per-window, per-variate mean and clamped std, kept for denormalization.

    Shapes are [N] for a single window and [B, 1, N] for a batch, so both
    broadcast directly against [.., F, N] predictions.
    """

    mean: np.ndarray
    std: np.ndarray


@dataclass(frozen=True)
class PatchConfig:
    """Patch length P, stride S, derived patch count M, model width D."""

    P: int
    S: int
    M: int
    D: int

    def __post_init__(self):
        if self.P < 1:
            raise ConfigError(f"patch length must be >= 1, got {self.P}")
        if not 1 <= self.S <= self.P:
            raise ConfigError(
                f"stride must satisfy 1 <= S <= P, got S={self.S}, P={self.P}"
            )
        if self.D < 1:
            raise ConfigError(f"model width must be >= 1, got {self.D}")

    @classmethod
    def for_lookback(cls, T: int, P: int, S: int, D: int) -> "PatchConfig":
        if T < P:
            raise ConfigError(f"lookback {T} is shorter than patch length {P}")
        return cls(P=P, S=S, M=patch_count(T, P, S), D=D)

    @property
    def padded_length(self) -> int:
        return (self.M - 1) * self.S + self.P


def patch_count(T: int, P: int, S: int) -> int:
    """Number of patches for lookback T: ceil((T - P) / S) + 2."""
    return -((T - P) // -S) + 2


def revin_normalize(x: np.ndarray) -> tuple:
    """Normalize each variate of each window to zero mean, unit std.

    Accepts [T, N] or [B, T, N]; statistics are per window and per variate,
    population std with a small positive floor so constant series map to zeros.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (2, 3):
        raise ShapeError(f"expected [T,N] or [B,T,N], got shape {x.shape}")
    if x.shape[-2] < 2:
        raise ShapeError(f"need at least 2 time steps to normalize, got {x.shape}")
    axis = -2
    mean = x.mean(axis=axis, keepdims=True)
    std = np.maximum(x.std(axis=axis, keepdims=True), STD_FLOOR)
    if x.ndim == 2:
        stats = NormStats(mean=mean[0], std=std[0])
    else:
        stats = NormStats(mean=mean, std=std)
    return (x - mean) / std, stats


def revin_denormalize(y, stats: NormStats):
    """Undo ``revin_normalize``: y * std + mean, broadcasting over the horizon.

    Works on plain arrays or Tensors (the model output keeps its gradient
    path through the affine rescale).
    """
    n_y = y.shape[-1]
    n_s = stats.std.shape[-1]
    if n_y != n_s:
        raise ShapeError(f"stats cover {n_s} variates but prediction has {n_y}")
    if isinstance(y, Tensor):
        return y * stats.std + stats.mean
    return np.asarray(y) * stats.std + stats.mean


def pad_tail(x: np.ndarray, P: int, S: int) -> np.ndarray:
    """Append copies of the final time step so exactly M patches fit.

    Output length is (M - 1) * S + P with M = ceil((T - P) / S) + 2; when S
    divides T - P this appends exactly S rows.
    """
    x = np.asarray(x)
    T = x.shape[-2]
    target = (patch_count(T, P, S) - 1) * S + P
    extra = target - T
    last = x[..., -1:, :]
    reps = [1] * x.ndim
    reps[-2] = extra
    return np.concatenate([x, np.tile(last, reps)], axis=-2)


def patchify(x: np.ndarray, P: int, S: int) -> np.ndarray:
    """Cut one padded variate series [T'] into its patch matrix [M x P]."""
    x = np.asarray(x)
    if x.ndim != 1:
        raise ShapeError(f"patchify expects a single series, got shape {x.shape}")
    if (x.shape[0] - P) % S != 0 or x.shape[0] < P:
        raise ShapeError(
            f"length {x.shape[0]} does not tile with patch {P} stride {S}; pad first"
        )
    M = (x.shape[0] - P) // S + 1
    idx = np.arange(M)[:, None] * S + np.arange(P)
    return x[idx]


def embed_patches(patches, W_p: Tensor, W_pos: Tensor) -> Tensor:
    """Project one variate's patches [M x P] to tokens [M x D] plus position."""
    patches = patches if isinstance(patches, Tensor) else Tensor(patches)
    if patches.ndim != 2:
        raise ShapeError(f"expected [M,P] patches, got shape {patches.shape}")
    M, P = patches.shape
    if W_p.shape[0] != P:
        raise ShapeError(f"projection expects patch length {W_p.shape[0]}, got {P}")
    if W_pos.shape != (M, W_p.shape[1]):
        raise ShapeError(
            f"position encoding shape {W_pos.shape} does not match [{M},{W_p.shape[1]}]"
        )
    return patches @ W_p + W_pos


def embed_grid(padded: np.ndarray, W_p: Tensor, W_pos: Tensor, P: int, S: int) -> Tensor:
    """Embed a padded batch [B x T' x N] into the grid [B x M x N x D].

    Equivalent to running ``patchify`` + ``embed_patches`` per variate; the
    projection and position encoding are shared across variates, and the
    position encoding depends only on the patch (time) axis.
    """
    padded = np.asarray(padded, dtype=np.float64)
    if padded.ndim != 3:
        raise ShapeError(f"expected [B,T',N], got shape {padded.shape}")
    Tp = padded.shape[1]
    if (Tp - P) % S != 0 or Tp < P:
        raise ShapeError(f"padded length {Tp} does not tile with patch {P} stride {S}")
    M = (Tp - P) // S + 1
    idx = np.arange(M)[:, None] * S + np.arange(P)
    # [B, M, P, N] -> [B, M, N, P]
    patches = padded[:, idx, :].transpose(0, 1, 3, 2)
    D = W_p.shape[1]
    if W_pos.shape != (M, D):
        raise ShapeError(
            f"position encoding shape {W_pos.shape} does not match [{M},{D}]"
        )
    return Tensor(patches) @ W_p + W_pos.reshape(M, 1, D)
