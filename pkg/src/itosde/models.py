"""Conditional score networks.

Three configurations share the same gated dilated-residual decoder:

* WaveScoreNet estimates the score of waveform samples conditioned on a mel
  spectrogram (upsampled to the sample rate by two transposed convolutions)
  and the diffusion time.
* MelScoreNet estimates the score of mel frames conditioned on a frame-aligned
  token sequence; it can split the mel channels across several independent
  decoder groups, each owning its channel band end to end.
* MlpScoreNet is the small dense network used for low-dimensional targets.

Networks optionally divide their raw output by the kernel standard deviation
at t (std_fn), so the trainable part regresses the bounded noise direction
instead of a score whose magnitude spans orders of magnitude in t.
"""

from __future__ import annotations

import math

import numpy as np

from .nn import tensor as T
from .nn.layers import (
    Conv1d,
    Dense,
    Embedding,
    GaussianFourierProjection,
    Module,
    TransposedConv1d,
)
from .nn.tensor import Tensor
from .rng import RandomSource
from .sde import T_MIN

INV_SQRT2 = 1.0 / math.sqrt(2.0)


class DilatedResidualBlock(Module):
    """Gated residual block: two outputs, a state for the next block and a skip.

    The time embedding is added to the block input before the dilated conv;
    the conditioning signal enters the gate pre-activation through a 1x1 conv.
    The gate splits channels in two and combines them as tanh(a) * sigmoid(b).
    """

    def __init__(self, residual_channels: int, cond_channels: int, time_dim: int,
                 dilation: int, rng: RandomSource):
        super().__init__()
        R = residual_channels
        self.time_proj = Dense(time_dim, R, rng)
        self.dilated_conv = Conv1d(R, 2 * R, kernel=3, rng=rng, dilation=dilation)
        self.cond_proj = Conv1d(cond_channels, 2 * R, kernel=1, rng=rng)
        self.state_out = Conv1d(R, R, kernel=1, rng=rng)
        self.skip_out = Conv1d(R, R, kernel=1, rng=rng)

    def forward(self, x: Tensor, temb: Tensor, cond: Tensor) -> tuple[Tensor, Tensor]:
        h = T.add_channel_bias(x, self.time_proj(temb))
        gate = T.cond_gate(self.dilated_conv(h), self.cond_proj(cond))
        state = T.add_scaled(self.state_out(gate), x, INV_SQRT2)
        return state, self.skip_out(gate)


class _TimeEmbed(Module):
    def __init__(self, time_dim: int, gfp_scale: float, n_dense: int, rng: RandomSource):
        super().__init__()
        self.gfp = GaussianFourierProjection(time_dim, rng, scale=gfp_scale)
        self.dense = [Dense(time_dim, time_dim, rng) for _ in range(n_dense)]

    def forward(self, t: np.ndarray) -> Tensor:
        h = self.gfp(t)
        for fc in self.dense:
            h = T.silu(fc(h))
        return h


class WaveScoreNet(Module):
    def __init__(self, mel_channels: int, hop_length: int, upsample_strides: tuple[int, int],
                 rng: RandomSource, residual_channels: int = 32, n_blocks: int = 10,
                 dilation_cycle: int = 10, time_dim: int = 128, gfp_scale: float = 16.0,
                 std_fn=None):
        super().__init__()
        s1, s2 = upsample_strides
        if s1 * s2 != hop_length:
            raise ValueError(
                f"upsample strides {upsample_strides} must multiply to hop length {hop_length}"
            )
        self.mel_channels = mel_channels
        self.hop_length = hop_length
        self.arch = {
            "kind": "wave",
            "mel_channels": mel_channels,
            "hop_length": hop_length,
            "upsample_strides": [s1, s2],
            "residual_channels": residual_channels,
            "n_blocks": n_blocks,
            "dilation_cycle": dilation_cycle,
            "time_dim": time_dim,
            "gfp_scale": gfp_scale,
        }
        self.std_fn = std_fn
        R = residual_channels
        self.input_conv = Conv1d(1, R, kernel=1, rng=rng)
        self.time_embed = _TimeEmbed(time_dim, gfp_scale, n_dense=2, rng=rng)
        self.upsample1 = TransposedConv1d(mel_channels, mel_channels, stride=s1, rng=rng)
        self.upsample2 = TransposedConv1d(mel_channels, mel_channels, stride=s2, rng=rng)
        self.blocks = [
            DilatedResidualBlock(R, mel_channels, time_dim, 2 ** (i % dilation_cycle), rng)
            for i in range(n_blocks)
        ]
        self.head1 = Conv1d(R, R, kernel=1, rng=rng)
        self.head2 = Conv1d(R, 1, kernel=1, rng=rng, zero_init=True)

    def forward(self, x: np.ndarray, t: np.ndarray, mel: np.ndarray) -> Tensor:
        x = np.asarray(x, dtype=np.float64)
        mel = np.asarray(mel, dtype=np.float64)
        B, _, L = x.shape
        F = mel.shape[2]
        if L != F * self.hop_length:
            raise ValueError(
                f"wave length {L} != mel frames {F} x hop {self.hop_length}"
            )
        temb = self.time_embed(np.asarray(t, dtype=np.float64))
        cond = self.upsample2(T.silu(self.upsample1(Tensor(mel))))
        h = T.silu(self.input_conv(Tensor(x)))
        skip_sum = None
        for blk in self.blocks:
            h, skip = blk(h, temb, cond)
            skip_sum = skip if skip_sum is None else T.add(skip_sum, skip)
        out = self.head2(T.silu(self.head1(skip_sum)))
        if self.std_fn is not None:
            std = np.asarray(self.std_fn(np.maximum(t, T_MIN)), dtype=np.float64)
            out = T.mul(out, Tensor((1.0 / std).reshape(B, 1, 1)))
        return out

    def score(self, x: np.ndarray, t, cond: np.ndarray) -> np.ndarray:
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],))
        return self.forward(x, t, cond).data

    __call__ = score

    def state_shape(self, cond: np.ndarray) -> tuple:
        B, _, F = cond.shape
        return (B, 1, F * self.hop_length)


class _MelDecoderGroup(Module):
    """One decoder stack owning a contiguous band of mel channels."""

    def __init__(self, band_channels: int, residual_channels: int, embed_dim: int,
                 time_dim: int, n_blocks: int, dilation_cycle: int, rng: RandomSource):
        super().__init__()
        R = residual_channels
        self.n_blocks = n_blocks
        self.input_conv = Conv1d(band_channels, R, kernel=3, rng=rng)
        self.enc1 = Conv1d(R, R, kernel=1, rng=rng)
        self.enc2 = Conv1d(R, R, kernel=1, rng=rng)
        self.blocks = [
            DilatedResidualBlock(R, embed_dim, time_dim, 2 ** (i % dilation_cycle), rng)
            for i in range(n_blocks)
        ]
        self.head1 = Conv1d(R, R, kernel=1, rng=rng)
        self.head2 = Conv1d(R, band_channels, kernel=1, rng=rng, zero_init=True)

    def forward(self, x_band: Tensor, temb: Tensor, cond: Tensor) -> Tensor:
        h = T.silu(self.input_conv(x_band))
        h = T.silu(self.enc1(h))
        h = T.silu(self.enc2(h))
        skip_sum = None
        for blk in self.blocks:
            h, skip = blk(h, temb, cond)
            skip_sum = skip if skip_sum is None else T.add(skip_sum, skip)
        avg = T.mul_scalar(skip_sum, 1.0 / self.n_blocks)
        return self.head2(T.silu(self.head1(avg)))


class MelScoreNet(Module):
    def __init__(self, mel_channels: int, vocab_size: int, rng: RandomSource, groups: int = 1,
                 embed_dim: int = 64, residual_channels: int = 32, n_blocks: int = 8,
                 dilation_cycle: int = 4, time_dim: int = 128, gfp_scale: float = 16.0,
                 std_fn=None):
        super().__init__()
        if mel_channels % groups != 0:
            raise ValueError(f"groups {groups} must divide mel channels {mel_channels}")
        self.mel_channels = mel_channels
        self.n_groups = groups
        self.arch = {
            "kind": "mel",
            "mel_channels": mel_channels,
            "vocab_size": vocab_size,
            "groups": groups,
            "embed_dim": embed_dim,
            "residual_channels": residual_channels,
            "n_blocks": n_blocks,
            "dilation_cycle": dilation_cycle,
            "time_dim": time_dim,
            "gfp_scale": gfp_scale,
        }
        self.std_fn = std_fn
        self.token_embedding = Embedding(vocab_size, embed_dim, rng)
        self.time_embed = _TimeEmbed(time_dim, gfp_scale, n_dense=1, rng=rng)
        band = mel_channels // groups
        self.decoders = [
            _MelDecoderGroup(band, residual_channels, embed_dim, time_dim, n_blocks,
                             dilation_cycle, rng)
            for _ in range(groups)
        ]

    def forward(self, x: np.ndarray, t: np.ndarray, tokens: np.ndarray) -> Tensor:
        x = np.asarray(x, dtype=np.float64)
        tokens = np.asarray(tokens)
        B, M, F = x.shape
        if M != self.mel_channels:
            raise ValueError(f"input has {M} mel channels, model expects {self.mel_channels}")
        if tokens.shape != (B, F):
            raise ValueError(f"token shape {tokens.shape} must be {(B, F)}")
        temb = self.time_embed(np.asarray(t, dtype=np.float64))
        cond = self.token_embedding(tokens)
        band = M // self.n_groups
        outs = []
        for g, dec in enumerate(self.decoders):
            x_band = Tensor(x[:, g * band:(g + 1) * band, :])
            outs.append(dec(x_band, temb, cond))
        out = outs[0] if len(outs) == 1 else T.concat(outs, axis=1)
        if self.std_fn is not None:
            std = np.asarray(self.std_fn(np.maximum(t, T_MIN)), dtype=np.float64)
            out = T.mul(out, Tensor((1.0 / std).reshape(B, 1, 1)))
        return out

    def score(self, x: np.ndarray, t, cond: np.ndarray) -> np.ndarray:
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],))
        return self.forward(x, t, cond).data

    __call__ = score

    def state_shape(self, cond: np.ndarray) -> tuple:
        B, F = cond.shape
        return (B, self.mel_channels, F)


class MlpScoreNet(Module):
    """Three dense/Silu layers over [x, time features]; for vector targets."""

    def __init__(self, dim: int, rng: RandomSource, hidden: int = 64, time_dim: int = 32,
                 gfp_scale: float = 16.0, std_fn=None):
        super().__init__()
        self.dim = dim
        self.arch = {"kind": "mlp", "dim": dim, "hidden": hidden, "time_dim": time_dim,
                     "gfp_scale": gfp_scale}
        self.std_fn = std_fn
        self.gfp = GaussianFourierProjection(time_dim, rng, scale=gfp_scale)
        self.fc_in = Dense(dim + time_dim, hidden, rng)
        self.fc_mid = Dense(hidden, hidden, rng)
        self.fc_out = Dense(hidden, dim, rng, zero_init=True)

    def forward(self, x: np.ndarray, t: np.ndarray, cond=None) -> Tensor:
        x = np.asarray(x, dtype=np.float64)
        e = self.gfp(np.asarray(t, dtype=np.float64))
        h = T.concat([Tensor(x), e], axis=1)
        h = T.silu(self.fc_in(h))
        h = T.silu(self.fc_mid(h))
        out = self.fc_out(h)
        if self.std_fn is not None:
            std = np.asarray(self.std_fn(np.maximum(t, T_MIN)), dtype=np.float64)
            out = T.mul(out, Tensor((1.0 / std).reshape(-1, 1)))
        return out

    def score(self, x: np.ndarray, t, cond=None) -> np.ndarray:
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],))
        return self.forward(x, t, cond).data

    __call__ = score
