"""Classifier pretraining and alternating GAN optimization."""
from __future__ import annotations

import copy
import hashlib
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterator, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from .ckpt import Checkpoint
from .dataio import DatasetManifest, Sample, batch_composite, load_samples
from .losses import (DEFAULT_LAYER_SET, LossError, LossWeights, build_extractor, camouflage_loss,
                     feature_matching_loss, gan_loss_d, gan_loss_g, perceptual_loss,
                     total_generator_loss)
from .netarch import (ClassifierSpec, DiscriminatorSpec, GeneratorSpec, build_classifier,
                      build_discriminator, build_generator, freeze, spec_to_dict)
from .seeding import derive_seed

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 2e-4
    total_epochs: int = 400
    constant_epochs: int = 100
    batch_size: int = 16
    image_size: int = 512
    seed: int = 0
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    desk_mode: bool = False
    freeze_classifier: bool = True
    saturating_gan: bool = False

    def __post_init__(self):
        if not 0 <= self.constant_epochs <= self.total_epochs:
            raise ValueError("need 0 <= constant_epochs <= total_epochs")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")


@dataclass(frozen=True)
class ModelSpecs:
    generator: GeneratorSpec = field(default_factory=GeneratorSpec)
    discriminator: DiscriminatorSpec = field(default_factory=DiscriminatorSpec)
    classifier: ClassifierSpec = field(default_factory=ClassifierSpec)
    vgg_width_div: int = 1
    vgg_weights: str | None = None
    layer_set: tuple[int, ...] = DEFAULT_LAYER_SET

    @classmethod
    def desk(cls, **kw):
        base = dict(generator=GeneratorSpec.desk(), discriminator=DiscriminatorSpec.desk(),
                    classifier=ClassifierSpec.desk(), vgg_width_div=8)
        return cls(**{**base, **kw})


class TrainingDiverged(RuntimeError):
    def __init__(self, msg, checkpoint: Checkpoint | None = None):
        super().__init__(msg)
        self.checkpoint = checkpoint


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    """Constant for ``constant_epochs``, then linear to 0 at ``total_epochs``."""
    if not 0 <= epoch <= cfg.total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {cfg.total_epochs}]")
    if epoch < cfg.constant_epochs:
        return cfg.lr
    span = cfg.total_epochs - cfg.constant_epochs
    if span == 0:
        return 0.0
    return cfg.lr * (cfg.total_epochs - epoch) / span


def params_fingerprint(net: nn.Module) -> str:
    h = hashlib.sha256()
    for k, v in net.state_dict().items():
        h.update(k.encode())
        h.update(v.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def _stack(samples: Sequence[Sample]):
    return (torch.stack([s.image for s in samples]), torch.stack([s.mask for s in samples]))


def _as_samples(data, size, factor=1) -> list[Sample]:
    if isinstance(data, DatasetManifest):
        return load_samples(data, size, factor)
    return list(data)


def _config_dict(cfg: TrainConfig, weights: LossWeights | None = None) -> dict:
    d = asdict(cfg)
    if weights is not None:
        d.update(asdict(weights))
    return d


# --- classifier -------------------------------------------------------------

@torch.no_grad()
def classifier_accuracy(net, images: torch.Tensor, labels: torch.Tensor, batch: int = 64) -> float:
    net.eval()
    correct = 0
    for i in range(0, len(images), batch):
        pred = net.logits(images[i:i + batch]).argmax(1)
        correct += int((pred == labels[i:i + batch]).sum())
    return correct / len(images)


def train_classifier(camo, normal, cfg: TrainConfig, spec: ClassifierSpec | None = None,
                     max_steps: int = 200, eval_every: int = 10, patience: int = 10,
                     on_step: Callable[[dict], None] | None = None) -> Checkpoint:
    """Fit the camouflage classifier with balanced batches and cross-entropy.

    ``camo``/``normal`` are manifests or sample lists. Accuracy on the full
    training set is checked every ``eval_every`` steps; the best-accuracy
    weights are returned. Stops early at 100% accuracy or after ``patience``
    evaluations without improvement. Class index 0 is camouflage.
    """
    spec = spec or (ClassifierSpec.desk() if cfg.desk_mode else ClassifierSpec())
    camo = _as_samples(camo, cfg.image_size)
    normal = _as_samples(normal, cfg.image_size)
    if not camo or not normal:
        raise ValueError("train_classifier needs non-empty camouflage and normal sets")
    x_c = torch.stack([s.image for s in camo])
    x_n = torch.stack([s.image for s in normal])
    images = torch.cat([x_c, x_n])
    labels = torch.cat([torch.zeros(len(x_c), dtype=torch.long), torch.ones(len(x_n), dtype=torch.long)])

    net = build_classifier(spec, cfg.seed)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr, betas=(cfg.adam_beta1, cfg.adam_beta2))
    g = torch.Generator().manual_seed(derive_seed(cfg.seed, "classifier"))
    half = max(cfg.batch_size // 2, 1)
    cursors = {"c": [torch.randperm(len(x_c), generator=g), 0],
               "n": [torch.randperm(len(x_n), generator=g), 0]}

    def take(key, n):
        out = []
        while len(out) < n:
            perm, pos = cursors[key]
            if pos >= len(perm):
                perm, pos = torch.randperm(len(perm), generator=g), 0
            k = min(n - len(out), len(perm) - pos)
            out.extend(perm[pos:pos + k].tolist())
            cursors[key] = [perm, pos + k]
        return out

    best_acc, best_state, best_step, stale = -1.0, None, 0, 0
    for step in range(1, max_steps + 1):
        net.train()
        xb = torch.cat([x_c[take("c", half)], x_n[take("n", half)]])
        yb = torch.cat([torch.zeros(half, dtype=torch.long), torch.ones(half, dtype=torch.long)])
        loss = F.cross_entropy(net.logits(xb), yb)
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        if not math.isfinite(loss.item()):
            raise TrainingDiverged(f"classifier loss is {loss.item()} at step {step}")
        if step % eval_every == 0 or step == max_steps:
            acc = classifier_accuracy(net, images, labels)
            if on_step:
                on_step({"step": step, "loss": loss.item(), "accuracy": acc})
            log.info("classifier step %d loss %.4f acc %.4f", step, loss.item(), acc)
            if acc > best_acc:
                best_acc, best_step, stale = acc, step, 0
                best_state = {k: v.clone() for k, v in net.state_dict().items()}
            else:
                stale += 1
            if best_acc >= 1.0 or stale >= patience:
                break
    return Checkpoint(
        networks={"classifier": best_state},
        specs={"classifier": spec_to_dict(spec)},
        epoch=0, seed=cfg.seed, config=_config_dict(cfg),
        metrics={"accuracy": best_acc, "step": best_step},
    )


# --- GAN ----------------------------------------------------------------------

def _check_masks(samples: Sequence[Sample]):
    for s in samples:
        frac = s.foreground_fraction
        if frac <= 0.0 or frac >= 1.0:
            raise ValueError(f"degenerate mask for {s.name!r}: foreground fraction {frac}")


def background_l1(xhat: torch.Tensor, x: torch.Tensor, mask: torch.Tensor) -> float:
    bg = (1 - mask).expand_as(x)
    return float(((xhat - x).abs() * bg).sum() / bg.sum().clamp(min=1))


@dataclass
class GANState:
    G: nn.Module
    D: nn.Module
    opt_g: torch.optim.Optimizer
    opt_d: torch.optim.Optimizer
    epoch: int = 0
    step: int = 0


def _new_state(specs: ModelSpecs, cfg: TrainConfig) -> GANState:
    G = build_generator(specs.generator, derive_seed(cfg.seed, "G"))
    D = build_discriminator(specs.discriminator, derive_seed(cfg.seed, "D"))
    betas = (cfg.adam_beta1, cfg.adam_beta2)
    return GANState(G, D, torch.optim.Adam(G.parameters(), lr=cfg.lr, betas=betas),
                    torch.optim.Adam(D.parameters(), lr=cfg.lr, betas=betas))


def _state_checkpoint(st: GANState, cfg, weights, specs: ModelSpecs, metrics) -> Checkpoint:
    return Checkpoint(
        networks={"generator": {k: v.detach().clone() for k, v in st.G.state_dict().items()},
                  "discriminator": {k: v.detach().clone() for k, v in st.D.state_dict().items()}},
        specs={"generator": spec_to_dict(specs.generator),
               "discriminator": spec_to_dict(specs.discriminator)},
        epoch=st.epoch, seed=cfg.seed, config=_config_dict(cfg, weights),
        metrics={"step": st.step, **metrics},
        # optimizer state dicts alias live tensors
        optimizers={"generator": copy.deepcopy(st.opt_g.state_dict()),
                    "discriminator": copy.deepcopy(st.opt_d.state_dict())},
    )


def _restore(ckpt: Checkpoint, specs: ModelSpecs, cfg: TrainConfig) -> GANState:
    st = _new_state(specs, cfg)
    st.G.load_state_dict(ckpt.networks["generator"])
    st.D.load_state_dict(ckpt.networks["discriminator"])
    st.opt_g.load_state_dict(ckpt.optimizers["generator"])
    st.opt_d.load_state_dict(ckpt.optimizers["discriminator"])
    st.epoch = ckpt.epoch + 1
    st.step = int(ckpt.metrics.get("step", 0))
    return st


def _load_classifier(classifier) -> nn.Module:
    if isinstance(classifier, Checkpoint):
        classifier = classifier.network("classifier")
    return freeze(classifier)


def gan_step(st: GANState, C: nn.Module, extractor: nn.Module, x, y, seeds,
             weights: LossWeights, specs: ModelSpecs, cfg: TrainConfig) -> dict:
    """One alternating update: D on (real, fake) pairs, then G on the weighted total."""
    x_fg = x * y
    x_in = batch_composite(x, y, seeds)
    raw = st.G(x_in)
    xhat = x * y + raw * (1 - y)

    real_out = st.D(x_fg, x)
    fake_out = st.D(x_fg, xhat.detach())
    loss_d = gan_loss_d([o[0] for o in real_out], [o[0] for o in fake_out])
    if not torch.isfinite(loss_d):
        raise LossError(f"discriminator loss is {loss_d.item()}")
    st.opt_d.zero_grad(set_to_none=True)
    loss_d.backward()
    st.opt_d.step()

    fake_out = st.D(x_fg, xhat)
    with torch.no_grad():
        real_out = st.D(x_fg, x)
    gan_g = gan_loss_g([o[0] for o in fake_out], saturating=cfg.saturating_gan)
    fm = feature_matching_loss([o[1] for o in real_out], [o[1] for o in fake_out])
    vgg = perceptual_loss(extractor, xhat, x, specs.layer_set)
    cam, p_cam = camouflage_loss(C, xhat, return_prob=True)
    total, bundle = total_generator_loss(gan_g, fm, vgg, cam, weights, gan_d=loss_d.item())
    st.opt_g.zero_grad(set_to_none=True)
    total.backward()
    # D received grads through the fake branch; drop them before its next step
    st.D.zero_grad(set_to_none=True)
    st.opt_g.step()
    return {**bundle.as_dict(), "cam_prob": float(p_cam.mean()), "bg_l1": background_l1(xhat.detach(), x, y)}


def train_gan(data, classifier, cfg: TrainConfig, weights: LossWeights = LossWeights(),
              specs: ModelSpecs | None = None, resume: Checkpoint | None = None,
              max_steps: int | None = None,
              on_step: Callable[[dict], None] | None = None) -> Iterator[Checkpoint]:
    """Alternating GAN training; yields a Checkpoint at the end of every epoch.

    ``data`` is a manifest or a list of samples with non-degenerate masks;
    ``classifier`` a classifier Checkpoint or module (frozen here). Each
    step record passed to ``on_step`` carries step, epoch, lr and the loss
    bundle. On a non-finite loss, raises TrainingDiverged carrying a
    diagnostic checkpoint of the state at failure.
    """
    specs = specs or (ModelSpecs.desk() if cfg.desk_mode else ModelSpecs())
    samples = _as_samples(data, cfg.image_size, specs.generator.factor)
    if not samples:
        raise ValueError("no training samples")
    _check_masks(samples)
    images, masks = _stack(samples)
    C = _load_classifier(classifier)
    c_print = params_fingerprint(C)
    extractor = build_extractor(specs.vgg_weights, specs.vgg_width_div, derive_seed(cfg.seed, "vgg"))
    st = _restore(resume, specs, cfg) if resume is not None else _new_state(specs, cfg)

    n = len(samples)
    bs = min(cfg.batch_size, n)
    for epoch in range(st.epoch, cfg.total_epochs):
        st.epoch = epoch
        lr = lr_schedule(epoch, cfg)
        for opt in (st.opt_g, st.opt_d):
            for group in opt.param_groups:
                group["lr"] = lr
        perm = torch.randperm(n, generator=torch.Generator().manual_seed(derive_seed(cfg.seed, "perm", epoch)))
        last = {}
        for start in range(0, n - bs + 1, bs):
            idx = perm[start:start + bs]
            st.step += 1
            seeds = [derive_seed(cfg.seed, "noise", st.step, int(i)) for i in idx]
            try:
                rec = gan_step(st, C, extractor, images[idx], masks[idx], seeds, weights, specs, cfg)
            except LossError as e:
                diag = _state_checkpoint(st, cfg, weights, specs, {"diverged": str(e)})
                raise TrainingDiverged(f"step {st.step}: {e}", diag) from e
            last = {"step": st.step, "epoch": epoch, "lr": lr, **rec}
            if on_step:
                on_step(last)
            if max_steps is not None and st.step >= max_steps:
                break
        if params_fingerprint(C) != c_print:
            raise RuntimeError("classifier parameters changed during GAN training")
        yield _state_checkpoint(st, cfg, weights, specs, {k: last[k] for k in ("total", "bg_l1")} if last else {})
        if max_steps is not None and st.step >= max_steps:
            return
