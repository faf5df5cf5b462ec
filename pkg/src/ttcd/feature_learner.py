"""Non-stationary feature learner.

A small encoder-decoder transformer over windows of shape (l_max + 1, n).
Attention logits are conditioned on per-window profile vectors (gamma_Q,
gamma_K) and on de-stationary factors (tau, delta); the encoder also runs
a frequency-domain attention branch fused through a learned gate. The
decoder's pre-denormalization output is the distilled signal consumed by
the structure learner.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
import torch
from torch import nn

from .numeric import DTYPE, as_tensor

CHECKPOINT_FORMAT = "ttcd-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class LearnerConfig:
    d_e: int = 16
    n_heads: int = 1
    enc_layers: int = 1
    dec_layers: int = 1
    profile_hidden: int = 8
    dsb_hidden: int = 16
    ffn_mult: int = 2
    causal_attention: bool = False

    def __post_init__(self):
        if self.d_e < 2:
            raise ValueError("d_e must be >= 2")
        if self.enc_layers < 1 or self.dec_layers < 1:
            raise ValueError("encoder and decoder depth must be >= 1")
        if self.d_e % self.n_heads:
            raise ValueError("d_e must be divisible by n_heads")


class ProfileVectors(NamedTuple):
    gamma_q: torch.Tensor  # (N_w, d_e), > 0
    gamma_k: torch.Tensor


class DeStationaryFactors(NamedTuple):
    tau: torch.Tensor  # (N_w, 1), > 0
    delta: torch.Tensor  # (N_w, l_max + 1)


class LearnerOutput(NamedTuple):
    reconstruction_raw: torch.Tensor  # (N_w, L, n), normalized scale
    reconstruction: torch.Tensor  # denormalized
    latent: torch.Tensor  # (N_w, L, d_e)
    factors: DeStationaryFactors
    profile: ProfileVectors


def positional_encoding(length: int, d: int) -> torch.Tensor:
    pos = torch.arange(length, dtype=DTYPE)[:, None]
    div = torch.exp(torch.arange(0, d, 2, dtype=DTYPE) * (-math.log(10000.0) / d))
    pe = torch.zeros(length, d, dtype=DTYPE)
    pe[:, 0::2] = torch.sin(pos * div)
    pe[:, 1::2] = torch.cos(pos * div[: d // 2])
    return pe


def ns_attention(Q, K, V, tau=None, delta=None, gamma_q=None, gamma_k=None, mask=None,
                 return_weights: bool = False):
    """Softmax((tau Q K^T + 1 delta^T) / sqrt(d)) V with profile-conditioned Q, K.

    Q, K, V: (N, L, d) or (N, H, L, d). tau: (N, 1); delta: (N, L_k);
    gamma_*: (N, d_model), broadcast over the lag axis (and split across heads).
    ``mask`` is an optional boolean (L_q, L_k) matrix of allowed positions.
    """
    heads = Q.ndim == 4
    if not heads:
        Q, K, V = Q[:, None], K[:, None], V[:, None]
    N, H, Lq, d = Q.shape
    if K.shape[-1] != d or V.shape[-2] != K.shape[-2]:
        raise ValueError(f"attention shape mismatch: Q {tuple(Q.shape)}, K {tuple(K.shape)}, V {tuple(V.shape)}")
    if gamma_q is not None:
        Q = Q * gamma_q.reshape(N, H, 1, d)
    if gamma_k is not None:
        K = K * gamma_k.reshape(N, H, 1, d)
    scores = Q @ K.transpose(-1, -2)
    if tau is not None:
        scores = scores * tau.reshape(N, 1, 1, 1)
    if delta is not None:
        scores = scores + delta.reshape(N, 1, 1, -1)
    scores = scores / math.sqrt(d)
    if mask is not None:
        scores = scores.masked_fill(~mask, float("-inf"))
    weights = torch.softmax(scores, dim=-1)
    out = weights @ V
    if not heads:
        out, weights = out[:, 0], weights[:, 0]
    return (out, weights) if return_weights else out


def fuse(temporal: torch.Tensor, frequency: torch.Tensor, gate) -> torch.Tensor:
    """Gated residual fusion of the temporal and frequency branches."""
    return temporal + gate * frequency


class ProfilingNet(nn.Module):
    """Local moments of the raw window -> exp-parameterized gamma_Q, gamma_K."""

    def __init__(self, n_vars: int, d_e: int, hidden: int = 8):
        super().__init__()
        self.d_e = d_e
        self.hidden = nn.Linear(4 * n_vars, hidden, dtype=DTYPE)
        self.out = nn.Linear(hidden, 2 * d_e, dtype=DTYPE)
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)

    @staticmethod
    def features(raw: torch.Tensor, mu=None, sigma=None) -> torch.Tensor:
        mean = raw.mean(dim=1)
        c = raw - mean[:, None]
        var = (c**2).mean(dim=1)
        ok = var > 1e-12
        safe = torch.where(ok, var, torch.ones_like(var))
        skew = torch.where(ok, (c**3).mean(dim=1) / safe**1.5, torch.zeros_like(var))
        kurt = torch.where(ok, (c**4).mean(dim=1) / safe**2 - 3.0, torch.zeros_like(var))
        if mu is not None:
            # fixed affine rescaling of the first two moments; skew/kurtosis are scale-free
            mean = (mean - mu) / sigma
            var = var / sigma**2
        return torch.cat([mean, var, skew, kurt], dim=-1)

    def forward(self, raw, mu=None, sigma=None) -> ProfileVectors:
        z = self.out(torch.relu(self.hidden(self.features(raw, mu, sigma))))
        gq, gk = torch.exp(z).split(self.d_e, dim=-1)
        return ProfileVectors(gq, gk)


class DeStationaryBlock(nn.Module):
    """Convolution over the lag axis + two ReLU layers -> (tau, delta)."""

    def __init__(self, n_vars: int, length: int, hidden: int = 16):
        super().__init__()
        self.conv = nn.Conv1d(n_vars, n_vars, kernel_size=3, padding=1, dtype=DTYPE)
        self.mlp = nn.Sequential(
            nn.Linear(n_vars * length + 2 * n_vars, hidden, dtype=DTYPE), nn.ReLU(),
            nn.Linear(hidden, hidden, dtype=DTYPE), nn.ReLU(),
        )
        self.tau_head = nn.Linear(hidden, 1, dtype=DTYPE)
        self.delta_head = nn.Linear(hidden, length, dtype=DTYPE)
        for head in (self.tau_head, self.delta_head):
            nn.init.zeros_(head.weight)
            nn.init.zeros_(head.bias)

    def forward(self, raw, mu, sigma) -> DeStationaryFactors:
        N = raw.shape[0]
        x = (raw / sigma).transpose(1, 2)  # (N, n, L); level kept, scale conditioned
        conv = self.conv(x).reshape(N, -1)
        glob = torch.cat([mu / sigma, torch.log(sigma)]).expand(N, -1)
        z = self.mlp(torch.cat([conv, glob], dim=-1))
        return DeStationaryFactors(torch.exp(self.tau_head(z)), self.delta_head(z))


class FrequencyAttention(nn.Module):
    """Per-bin complex reweighting of the lag-axis spectrum.

    Bin weights are num_bins * softmax over bins of (bias + scale * log(1 + |X|^2)),
    so zero parameters give the identity filter.
    """

    def __init__(self, length: int, d_e: int):
        super().__init__()
        if length < 2:
            raise ValueError("frequency attention needs a lag axis of length >= 2")
        self.length = length
        self.n_bins = length // 2 + 1
        self.bias = nn.Parameter(torch.zeros(self.n_bins, d_e, dtype=DTYPE))
        self.scale = nn.Parameter(torch.zeros(d_e, dtype=DTYPE))
        self.phase = nn.Parameter(torch.zeros(self.n_bins, d_e, dtype=DTYPE))
        self.gate_logit = nn.Parameter(torch.zeros((), dtype=DTYPE))

    @property
    def gate(self) -> torch.Tensor:
        return torch.sigmoid(self.gate_logit)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != self.length:
            raise ValueError(f"lag axis length {x.shape[1]} != {self.length}")
        X = torch.fft.rfft(x, dim=1)
        power = X.real**2 + X.imag**2
        logits = self.bias + self.scale * torch.log1p(power)
        w = self.n_bins * torch.softmax(logits, dim=1)
        filt = torch.complex(w * torch.cos(self.phase), w * torch.sin(self.phase))
        return torch.fft.irfft(X * filt, n=self.length, dim=1)


class AttentionLayer(nn.Module):
    def __init__(self, d_e: int, n_heads: int = 1):
        super().__init__()
        self.n_heads = n_heads
        self.q = nn.Linear(d_e, d_e, dtype=DTYPE)
        self.k = nn.Linear(d_e, d_e, dtype=DTYPE)
        self.v = nn.Linear(d_e, d_e, dtype=DTYPE)
        self.o = nn.Linear(d_e, d_e, dtype=DTYPE)

    def _split(self, x):
        N, L, d = x.shape
        return x.reshape(N, L, self.n_heads, d // self.n_heads).transpose(1, 2)

    def forward(self, xq, xkv, factors=None, profile=None, mask=None):
        tau, delta = factors if factors is not None else (None, None)
        gq, gk = profile if profile is not None else (None, None)
        out = ns_attention(self._split(self.q(xq)), self._split(self.k(xkv)), self._split(self.v(xkv)),
                           tau, delta, gq, gk, mask)
        N, H, L, dh = out.shape
        return self.o(out.transpose(1, 2).reshape(N, L, H * dh))


def _ffn(d_e: int, mult: int) -> nn.Sequential:
    return nn.Sequential(nn.Linear(d_e, mult * d_e, dtype=DTYPE), nn.ReLU(), nn.Linear(mult * d_e, d_e, dtype=DTYPE))


class EncoderBlock(nn.Module):
    def __init__(self, d_e, length, n_heads=1, ffn_mult=2, use_freq=True):
        super().__init__()
        self.attn = AttentionLayer(d_e, n_heads)
        self.freq = FrequencyAttention(length, d_e) if use_freq else None
        self.norm1 = nn.LayerNorm(d_e, dtype=DTYPE)
        self.ffn = _ffn(d_e, ffn_mult)
        self.norm2 = nn.LayerNorm(d_e, dtype=DTYPE)

    def forward(self, x, factors=None, profile=None, mask=None):
        a = self.attn(x, x, factors, profile, mask)
        if self.freq is not None:
            a = fuse(a, self.freq(x), self.freq.gate)
        h = self.norm1(x + a)
        return self.norm2(h + self.ffn(h))


class DecoderBlock(nn.Module):
    """Self-attention over input embeddings, then cross-attention to the latent."""

    def __init__(self, d_e, n_heads=1, ffn_mult=2):
        super().__init__()
        self.self_attn = AttentionLayer(d_e, n_heads)
        self.cross_attn = AttentionLayer(d_e, n_heads)
        self.norm1 = nn.LayerNorm(d_e, dtype=DTYPE)
        self.norm2 = nn.LayerNorm(d_e, dtype=DTYPE)
        self.norm3 = nn.LayerNorm(d_e, dtype=DTYPE)
        self.ffn = _ffn(d_e, ffn_mult)

    def forward(self, x, latent, factors=None, profile=None, mask=None):
        h = self.norm1(x + self.self_attn(x, x, factors, profile, mask))
        h = self.norm2(h + self.cross_attn(h, latent, factors, profile, mask))
        return self.norm3(h + self.ffn(h))


class FeatureLearner(nn.Module):
    """Encoder-decoder reconstruction of normalized windows.

    ``use_profile`` / ``use_dsb`` / ``use_freq`` switch the three
    non-stationary components; with all three off this is a plain
    transformer autoencoder.
    """

    def __init__(self, n_vars: int, l_max: int, config: LearnerConfig = LearnerConfig(),
                 use_profile: bool = True, use_dsb: bool = True, use_freq: bool = True):
        super().__init__()
        self.n_vars, self.l_max, self.config = n_vars, l_max, config
        L, d = l_max + 1, config.d_e
        self.use_profile, self.use_dsb, self.use_freq = use_profile, use_dsb, use_freq
        self.proj = nn.Linear(n_vars, d, dtype=DTYPE)
        self.register_buffer("pe", positional_encoding(L, d))
        self.profiler = ProfilingNet(n_vars, d, config.profile_hidden)
        self.dsb = DeStationaryBlock(n_vars, L, config.dsb_hidden)
        self.encoder = nn.ModuleList(
            EncoderBlock(d, L, config.n_heads, config.ffn_mult, use_freq) for _ in range(config.enc_layers)
        )
        self.decoder = nn.ModuleList(
            DecoderBlock(d, config.n_heads, config.ffn_mult) for _ in range(config.dec_layers)
        )
        self.out = nn.Linear(d, n_vars, dtype=DTYPE)
        if config.causal_attention:
            self.register_buffer("mask", torch.tril(torch.ones(L, L, dtype=torch.bool)))
        else:
            self.mask = None
        if not use_profile:
            self.profiler.requires_grad_(False)
        if not use_dsb:
            self.dsb.requires_grad_(False)

    def embed(self, windows) -> torch.Tensor:
        x = as_tensor(windows)
        if x.ndim != 3 or x.shape[-1] != self.n_vars or x.shape[1] != self.l_max + 1:
            raise ValueError(f"expected windows of shape (N, {self.l_max + 1}, {self.n_vars}), got {tuple(x.shape)}")
        return self.proj(x) + self.pe

    def profile(self, raw, mu=None, sigma=None) -> ProfileVectors:
        if not self.use_profile:
            ones = torch.ones(raw.shape[0], self.config.d_e, dtype=DTYPE)
            return ProfileVectors(ones, ones)
        return self.profiler(raw, mu, sigma)

    def dsb_factors(self, raw, mu, sigma) -> DeStationaryFactors:
        if not self.use_dsb:
            N = raw.shape[0]
            return DeStationaryFactors(torch.ones(N, 1, dtype=DTYPE), torch.zeros(N, self.l_max + 1, dtype=DTYPE))
        return self.dsb(raw, mu, sigma)

    def forward(self, windows, raw_windows, mu, sigma) -> LearnerOutput:
        mu, sigma = as_tensor(mu), as_tensor(sigma)
        raw = as_tensor(raw_windows)
        e = self.embed(windows)
        prof = self.profile(raw, mu, sigma)
        fac = self.dsb_factors(raw, mu, sigma)
        h = e
        for blk in self.encoder:
            h = blk(h, fac, prof, self.mask)
        latent = h
        d = e
        for blk in self.decoder:
            d = blk(d, latent, fac, prof, self.mask)
        recon_raw = self.out(d)
        return LearnerOutput(recon_raw, recon_raw * sigma + mu, latent, fac, prof)


class ConvFeatureBlock(nn.Module):
    """Transformer-free feature block: causal temporal Conv2D rescaled by the DSB.

    Used by the no-transformer ablation; it has no reconstruction target.
    """

    def __init__(self, n_vars: int, l_max: int, channels: int = 8, dsb_hidden: int = 16):
        super().__init__()
        self.n_vars, self.l_max = n_vars, l_max
        self.conv1 = nn.Conv2d(1, channels, kernel_size=(3, 1), dtype=DTYPE)
        self.conv2 = nn.Conv2d(channels, 1, kernel_size=1, dtype=DTYPE)
        nn.init.zeros_(self.conv2.weight)
        nn.init.zeros_(self.conv2.bias)
        self.dsb = DeStationaryBlock(n_vars, l_max + 1, dsb_hidden)

    def forward(self, windows, raw_windows, mu, sigma):
        x = as_tensor(windows)
        mu, sigma = as_tensor(mu), as_tensor(sigma)
        # left-pad the lag axis so no slot sees later slots
        z = nn.functional.pad(x[:, None], (0, 0, 2, 0))
        z = x + self.conv2(torch.relu(self.conv1(z)))[:, 0]
        fac = self.dsb(as_tensor(raw_windows), mu, sigma)
        return z * fac.tau[:, :, None] + fac.delta[:, :, None], fac


def reconstruction_loss(X, X_hat) -> torch.Tensor:
    """Mean squared error over every window, position and variable."""
    X, X_hat = as_tensor(X), as_tensor(X_hat)
    if X.shape != X_hat.shape:
        raise ValueError(f"shape mismatch {tuple(X.shape)} vs {tuple(X_hat.shape)}")
    return ((X - X_hat) ** 2).mean()


def save_checkpoint(module: nn.Module, path, meta: dict | None = None) -> None:
    """Write parameters as versioned JSON: name -> {shape, values}."""
    params = {
        name: {"shape": list(t.shape), "values": t.detach().reshape(-1).tolist()}
        for name, t in module.state_dict().items()
        if t.dtype.is_floating_point
    }
    doc = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, "meta": meta or {}, "params": params}
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_checkpoint(module: nn.Module, path) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    state = module.state_dict()
    for name, entry in doc["params"].items():
        if name not in state:
            raise ValueError(f"{path}: unknown parameter {name}")
        vals = torch.tensor(np.array(entry["values"], dtype=np.float64).reshape(entry["shape"]), dtype=DTYPE)
        if tuple(vals.shape) != tuple(state[name].shape):
            raise ValueError(f"{path}: shape mismatch for {name}")
        state[name] = vals
    module.load_state_dict(state)
    return doc.get("meta", {})
