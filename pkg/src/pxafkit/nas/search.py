"""Alternating first-order architecture search.

Per epoch, batches from the held-out set drive Adam steps on the
architecture weights alpha while training batches drive SGD-with-
momentum steps on the network weights; the alpha gradient ignores the
weight-response term (first-order approximation). Every epoch logs both
losses and the currently derived genotype.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import PxafError
from ..nn import Adam, SGD, no_grad
from ..nn import tensor as T
from ..nn.tensor import Tensor
from .genotype import derive_genotype, genotype_hash
from .network import NetworkPlan, SearchNetwork
from .space import AlphaParams


class EmptyData(PxafError):
    pass


class DivergenceDetected(PxafError):
    pass


@dataclass
class SearchConfig:
    epochs: int = 50
    batch_size: int = 6
    w_lr: float = 0.025
    w_momentum: float = 0.9
    w_weight_decay: float = 3e-4
    alpha_lr: float = 3e-4
    alpha_beta1: float = 0.5
    alpha_beta2: float = 0.999
    alpha_weight_decay: float = 1e-3
    init_channels: int = 16
    n_normal: int = 6
    n_reduction: int = 2
    normal_per_block: int = 3
    input_size: int = 39
    num_classes: int = 2
    seed: int = 0
    dtype: str = "float32"

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    def plan(self) -> NetworkPlan:
        return NetworkPlan(n_normal=self.n_normal, n_reduction=self.n_reduction,
                           normal_per_block=self.normal_per_block,
                           init_channels=self.init_channels,
                           num_classes=self.num_classes,
                           input_size=self.input_size)


@dataclass
class SearchLog:
    rows: list = field(default_factory=list)
    alpha_snapshots: list = field(default_factory=list)

    def append(self, epoch, train_loss, val_loss, ghash, alpha: AlphaParams):
        self.rows.append({"epoch": epoch, "train_loss": train_loss,
                          "val_loss": val_loss, "genotype_hash": ghash})
        self.alpha_snapshots.append(alpha.snapshot())

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = ["epoch,train_loss,val_loss,genotype_hash"]
        lines += [f"{r['epoch']},{r['train_loss']!r},{r['val_loss']!r},"
                  f"{r['genotype_hash']}" for r in self.rows]
        path.write_text("\n".join(lines) + "\n")
        return path

    def write_alpha_snapshots(self, out_dir: str | Path) -> list[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = []
        for epoch, snap in enumerate(self.alpha_snapshots):
            p = out_dir / f"alpha-epoch{epoch:04d}.npz"
            np.savez(p, **snap)
            paths.append(p)
        return paths


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n - batch_size + 1, batch_size):
        yield order[start: start + batch_size]


def search(train_data: tuple[np.ndarray, np.ndarray],
           val_data: tuple[np.ndarray, np.ndarray],
           cfg: SearchConfig) -> tuple[AlphaParams, SearchNetwork, SearchLog]:
    """Run the alternating optimization; returns the final architecture
    weights, the super-network (trained omega), and the per-epoch log."""
    x_train, y_train = train_data
    x_val, y_val = val_data
    if len(x_train) < cfg.batch_size or len(x_val) < cfg.batch_size:
        raise EmptyData(
            f"need at least one batch of {cfg.batch_size} in both sets, "
            f"got {len(x_train)} train / {len(x_val)} val")
    dt = cfg.np_dtype
    x_train = np.asarray(x_train, dtype=dt)
    x_val = np.asarray(x_val, dtype=dt)
    y_train = np.asarray(y_train, dtype=np.int64)
    y_val = np.asarray(y_val, dtype=np.int64)

    model = SearchNetwork(cfg.plan(), seed=cfg.seed, dtype=dt)
    alpha = AlphaParams.initial(seed=cfg.seed, dtype=dt)
    opt_w = SGD(model.parameters(), lr=cfg.w_lr, momentum=cfg.w_momentum,
                weight_decay=cfg.w_weight_decay)
    opt_a = Adam(alpha.tensors(), lr=cfg.alpha_lr, beta1=cfg.alpha_beta1,
                 beta2=cfg.alpha_beta2, weight_decay=cfg.alpha_weight_decay)
    rng_train = np.random.default_rng([cfg.seed, 10])
    rng_val = np.random.default_rng([cfg.seed, 11])

    log = SearchLog()
    for epoch in range(cfg.epochs):
        train_losses, val_losses = [], []
        val_iter = _batches(len(x_val), cfg.batch_size, rng_val)
        for tb in _batches(len(x_train), cfg.batch_size, rng_train):
            vb = next(val_iter, None)
            if vb is None:
                val_iter = _batches(len(x_val), cfg.batch_size, rng_val)
                vb = next(val_iter)

            # alpha step on a held-out batch (first-order: omega frozen)
            logits = model(Tensor(x_val[vb]), alpha)
            loss_a = T.cross_entropy(logits, y_val[vb])
            opt_a.zero_grad()
            model.zero_grad()
            loss_a.backward()
            opt_a.step()
            val_losses.append(loss_a.item())

            # omega step on a training batch
            logits = model(Tensor(x_train[tb]), alpha)
            loss_w = T.cross_entropy(logits, y_train[tb])
            opt_w.zero_grad()
            for t in alpha.tensors():
                t.zero_grad()
            loss_w.backward()
            opt_w.step()
            train_losses.append(loss_w.item())

        mean_t = float(np.mean(train_losses))
        mean_v = float(np.mean(val_losses))
        if not (np.isfinite(mean_t) and np.isfinite(mean_v)):
            raise DivergenceDetected(f"non-finite search loss at epoch {epoch}")
        log.append(epoch, mean_t, mean_v, genotype_hash(derive_genotype(alpha)),
                   alpha)
    return alpha, model, log
