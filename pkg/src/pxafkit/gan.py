"""Synthetic PxAF segment generation with a 1D U-Net GAN.

Generator: noise shaped like the output is pushed through stride-2
conv+LeakyReLU down blocks, then upsample+pad+conv+ReLU up blocks with
skip concatenations. Discriminator: conv+LeakyReLU+phase-shuffle stack
ending in one scalar score per example.

The value function V = E[log D(x)] + E[log(1 - D(G(z)))] is optimized
with an alternating discriminator/generator step per batch; the
generator uses the non-saturating form -E[log D(G(z))].
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import PxafError
from .data.records import CertStatus, Label, Provenance, Segment
from .nn import Adam, Conv1d, Linear, Module, no_grad
from .nn import tensor as T
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.tensor import Tensor


class EmptyDataset(PxafError):
    pass


class DivergenceDetected(PxafError):
    def __init__(self, message, last_checkpoint=None):
        super().__init__(message)
        self.last_checkpoint = last_checkpoint


@dataclass
class GanConfig:
    seg_len: int = 512
    n_leads: int = 1
    depth: int = 4                 # down/up block count
    base_channels: int = 16
    epochs: int = 300              # paper-scale run uses 8000
    lr: float = 1e-4
    batch_size: int = 8
    phase_shuffle_n: int = 2
    kernel_size: int = 25
    leaky_slope: float = 0.2
    seed: int = 0
    dtype: str = "float32"         # float64 available for bit-level debugging
    checkpoint_every: int = 0      # 0 -> epochs // 5

    def __post_init__(self):
        if self.seg_len % (2 ** self.depth) != 0:
            raise ValueError(
                f"seg_len {self.seg_len} not divisible by 2^depth={2 ** self.depth}")

    @property
    def noise_shape(self) -> tuple[int, int]:
        return (self.n_leads, self.seg_len)

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64


class Generator(Module):
    def __init__(self, cfg: GanConfig, rng: np.random.Generator):
        super().__init__()
        k, pad, dt = cfg.kernel_size, cfg.kernel_size // 2, cfg.np_dtype
        b = cfg.base_channels
        self.cfg = cfg
        down_channels = [cfg.n_leads] + [b * 2 ** i for i in range(cfg.depth)]
        self.down = [Conv1d(down_channels[i], down_channels[i + 1], k, stride=2,
                            pad=pad, rng=rng, dtype=dt)
                     for i in range(cfg.depth)]
        # up block i consumes the upsampled map concatenated with the skip
        self.up = []
        for i in range(cfg.depth - 1):
            c_in = down_channels[cfg.depth - i] + down_channels[cfg.depth - 1 - i]
            self.up.append(Conv1d(c_in, down_channels[cfg.depth - 1 - i], k,
                                  stride=1, pad=0, rng=rng, dtype=dt))
        self.head = Conv1d(down_channels[1], cfg.n_leads, k, stride=1, pad=0,
                           rng=rng, dtype=dt)
        self._pad = pad

    def forward(self, z: Tensor) -> Tensor:
        skips = []
        h = z
        for conv in self.down:
            h = T.leaky_relu(conv(h), self.cfg.leaky_slope)
            skips.append(h)
        h = skips[-1]
        for i, conv in enumerate(self.up):
            h = T.upsample_nearest_1d(h, 2)
            h = T.concat([h, skips[self.cfg.depth - 2 - i]], axis=1)
            h = T.pad_constant_1d(h, self._pad, self._pad)
            h = T.relu(conv(h))
        h = T.upsample_nearest_1d(h, 2)
        h = T.pad_constant_1d(h, self._pad, self._pad)
        return self.head(h)


class Discriminator(Module):
    def __init__(self, cfg: GanConfig, rng: np.random.Generator):
        super().__init__()
        k, pad, dt = cfg.kernel_size, cfg.kernel_size // 2, cfg.np_dtype
        b = cfg.base_channels
        self.cfg = cfg
        channels = [cfg.n_leads] + [min(b * 2 ** i, 8 * b) for i in range(cfg.depth + 1)]
        self.convs = [Conv1d(channels[i], channels[i + 1], k, stride=2, pad=pad,
                             rng=rng, dtype=dt)
                      for i in range(cfg.depth + 1)]
        tail_len = cfg.seg_len // 2 ** (cfg.depth + 1)
        self.score = Linear(channels[-1] * tail_len, 1, rng=rng, dtype=dt)
        self.shuffle_rng = np.random.default_rng(0)  # reseeded by train_gan

    def forward(self, x: Tensor) -> Tensor:
        h = x
        for conv in self.convs:
            h = T.leaky_relu(conv(h), self.cfg.leaky_slope)
            if self.training and self.cfg.phase_shuffle_n > 0:
                h = T.phase_shuffle(h, self.cfg.phase_shuffle_n, self.shuffle_rng)
        flat = T.reshape(h, (h.shape[0], h.shape[1] * h.shape[2]))
        return self.score(flat)


@dataclass
class GanModel:
    generator: Generator
    discriminator: Discriminator
    cfg: GanConfig

    def state_dict(self):
        state = {f"G.{k}": v for k, v in self.generator.state_dict().items()}
        state.update({f"D.{k}": v for k, v in self.discriminator.state_dict().items()})
        return state

    def load_state_dict(self, state):
        self.generator.load_state_dict(
            {k[2:]: v for k, v in state.items() if k.startswith("G.")})
        self.discriminator.load_state_dict(
            {k[2:]: v for k, v in state.items() if k.startswith("D.")})


def build_gan(cfg: GanConfig) -> GanModel:
    rng = np.random.default_rng([cfg.seed, 0xC0FFEE])
    return GanModel(Generator(cfg, rng), Discriminator(cfg, rng), cfg)


def gan_loss(d_real: Tensor, d_fake: Tensor) -> tuple[Tensor, Tensor]:
    """(loss_D, loss_G) from sigmoid scores.

    V = mean(log d_real) + mean(log(1 - d_fake)); loss_D = -V;
    loss_G = -mean(log d_fake) (non-saturating). V is recoverable as
    -loss_D for logging.
    """
    r = T.clip(d_real, 1e-7, 1.0 - 1e-7)
    f = T.clip(d_fake, 1e-7, 1.0 - 1e-7)
    v = T.log(r).mean() + T.log(1.0 - f).mean()
    loss_d = -v
    loss_g = -T.log(f).mean()
    return loss_d, loss_g


@dataclass
class LossLog:
    rows: list = field(default_factory=list)  # dicts: epoch, loss_D, loss_G, value

    def append(self, epoch: int, loss_d: float, loss_g: float):
        self.rows.append({"epoch": epoch, "loss_D": loss_d, "loss_G": loss_g,
                          "value": -loss_d})

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = ["epoch,loss_D,loss_G"]
        lines += [f"{r['epoch']},{r['loss_D']!r},{r['loss_G']!r}" for r in self.rows]
        path.write_text("\n".join(lines) + "\n")
        return path


def train_gan(real_segments: list[Segment], cfg: GanConfig,
              out_dir: str | Path | None = None) -> tuple[GanModel, LossLog]:
    """Alternating D/G training on real PxAF segments.

    Only the minority class is synthesized, so every input segment must
    be labeled PxAF; generated data never enters validation or test
    splits downstream.
    """
    if len(real_segments) == 0:
        raise EmptyDataset("no real segments to train on")
    if len(real_segments) < 2 * cfg.batch_size:
        raise EmptyDataset(
            f"need at least {2 * cfg.batch_size} segments, got {len(real_segments)}")
    bad = [s.id for s in real_segments if s.label is not Label.PXAF]
    if bad:
        raise ValueError(f"non-PxAF segments in GAN training set: {bad[:3]}")
    not_real = [s.id for s in real_segments
                if s.provenance is not Provenance.REAL]
    if not_real:
        raise ValueError(f"synthetic segments in GAN training set: {not_real[:3]}")

    dt = cfg.np_dtype
    data = np.stack([s.samples for s in real_segments]).astype(dt)
    data = data[:, None, :]  # (N, leads, L)

    model = build_gan(cfg)
    rng_data = np.random.default_rng([cfg.seed, 1])
    rng_noise = np.random.default_rng([cfg.seed, 2])
    model.discriminator.shuffle_rng = np.random.default_rng([cfg.seed, 3])

    opt_d = Adam(model.discriminator.parameters(), lr=cfg.lr)
    opt_g = Adam(model.generator.parameters(), lr=cfg.lr)

    log = LossLog()
    every = cfg.checkpoint_every or max(1, cfg.epochs // 5)
    last_ckpt = None

    def checkpoint(tag):
        nonlocal last_ckpt
        if out_dir is not None:
            last_ckpt = Path(out_dir) / f"gan-{tag}.ckpt"
            save_checkpoint(model.state_dict(), last_ckpt)
        else:
            last_ckpt = {k: v.copy() for k, v in model.state_dict().items()}

    n = len(data)
    steps = n // cfg.batch_size
    for epoch in range(cfg.epochs):
        order = rng_data.permutation(n)
        d_losses, g_losses = [], []
        for step in range(steps):
            idx = order[step * cfg.batch_size: (step + 1) * cfg.batch_size]
            xb = Tensor(data[idx])

            # discriminator step on real batch + frozen fake batch
            z = Tensor(rng_noise.standard_normal(
                (cfg.batch_size, *cfg.noise_shape)).astype(dt))
            with no_grad():
                fake = model.generator(z)
            d_real = T.sigmoid(model.discriminator(xb))
            d_fake = T.sigmoid(model.discriminator(Tensor(fake.data)))
            loss_d, _ = gan_loss(d_real, d_fake)
            opt_d.zero_grad()
            loss_d.backward()
            opt_d.step()

            # generator step through a fresh fake batch
            z = Tensor(rng_noise.standard_normal(
                (cfg.batch_size, *cfg.noise_shape)).astype(dt))
            fake = model.generator(z)
            d_fake = T.sigmoid(model.discriminator(fake))
            _, loss_g = gan_loss(d_real.detach(), d_fake)
            opt_g.zero_grad()
            model.discriminator.zero_grad()
            loss_g.backward()
            opt_g.step()

            d_losses.append(loss_d.item())
            g_losses.append(loss_g.item())

        mean_d = float(np.mean(d_losses))
        mean_g = float(np.mean(g_losses))
        if not (np.isfinite(mean_d) and np.isfinite(mean_g)):
            raise DivergenceDetected(
                f"non-finite loss at epoch {epoch}", last_checkpoint=last_ckpt)
        log.append(epoch, mean_d, mean_g)
        if (epoch + 1) % every == 0 or epoch == cfg.epochs - 1:
            checkpoint(f"epoch{epoch + 1:05d}")

    if out_dir is not None:
        log.write_csv(Path(out_dir) / "gan-loss.csv")
    return model, log


def generate(model: GanModel, count: int, seed: int = 0,
             run_id: str | None = None) -> list[Segment]:
    """Sample synthetic PxAF segments; every segment carries the
    generation-run id for audit and starts out certification-pending."""
    cfg = model.cfg
    run_id = run_id or f"g{seed:08d}"
    rng = np.random.default_rng([seed, 4])
    model.generator.eval()
    out: list[Segment] = []
    batch = 64
    while len(out) < count:
        take = min(batch, count - len(out))
        z = Tensor(rng.standard_normal((take, *cfg.noise_shape)).astype(cfg.np_dtype))
        with no_grad():
            fake = model.generator(z)
        for row in fake.data:
            i = len(out)
            out.append(Segment(
                id=f"syn-{run_id}-{i:05d}", source=f"synthetic:{run_id}",
                samples=row[0].astype(np.float64), fs=128, label=Label.PXAF,
                provenance=Provenance.SYNTHETIC, cert_status=CertStatus.PENDING))
            if len(out) == count:
                break
    model.generator.train()
    return out


def generation_manifest(run_id: str, seed: int, count: int,
                        checkpoint_path: str | Path | None) -> dict:
    digest = ""
    if checkpoint_path is not None and Path(checkpoint_path).exists():
        digest = hashlib.sha256(Path(checkpoint_path).read_bytes()).hexdigest()
    return {"run_id": run_id, "seed": seed, "count": count,
            "checkpoint_sha256": digest}


def save_gan(model: GanModel, path: str | Path) -> str:
    return save_checkpoint(model.state_dict(), path)


def load_gan(cfg: GanConfig, path: str | Path) -> GanModel:
    model = build_gan(cfg)
    model.load_state_dict(load_checkpoint(path))
    return model
