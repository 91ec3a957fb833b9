"""Optimization loop: data -> encoder -> fusion -> decoder -> losses.

Only the decoder and the four fusion convolutions train; the encoder stays
frozen. The learning rate follows inverse-time decay lr0 / (1 + decay * t).
Checkpoints round-trip the full state (parameters, optimizer moments, RNG)
bitwise.
"""

from __future__ import annotations

import hashlib
import json
import os
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import yaml

from . import data_io
from .data_io import TrainSample, make_train_sample
from .decoder import Decoder, concat_mask, downsample_mask
from .encoder import VggEncoder, load_encoder, mean_var_normalize
from .errors import CheckpointIntegrityError, DegenerateMaskError, VersionError
from .fusion import FusionConvs, similarity_gated_fuse
from .losses import LossReport, LossWeights, bpa_loss, immerse_loss, remove_loss, total_loss, tv_loss
from .saliency import spectral_residual_saliency

CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    foregrounds: str = ""
    masks: str = ""
    backgrounds: str = ""
    vgg_weights: str = ""
    out_dir: str = "runs/default"
    batch_size: int = 8
    lr0: float = 1e-4
    lr_decay: float = 5e-5
    max_iters: int = 160_000
    weights: LossWeights = field(default_factory=LossWeights)
    window: int = 7
    pair_sample_k: int | None = None
    seed: int = 0
    checkpoint_every: int = 1000
    train_size: int = 256
    freeze_fusion: bool = False
    cull_gray_backgrounds: bool = True
    resume: str | None = None

    def __post_init__(self):
        if self.batch_size <= 0:
            raise ValueError("batch_size must be positive")
        if self.lr0 <= 0:
            raise ValueError("lr0 must be positive")
        if self.window % 2 == 0:
            raise ValueError("window must be odd")

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "TrainConfig":
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        raw = dict(raw)
        weights = raw.pop("weights", None)
        cfg = cls(**raw)
        if weights is not None:
            cfg.weights = LossWeights(**weights)
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def lr_at(cfg: TrainConfig, iteration: int) -> float:
    """Inverse-time decayed learning rate at a given step."""
    return cfg.lr0 / (1.0 + cfg.lr_decay * iteration)


@dataclass
class TrainState:
    iteration: int
    decoder: Decoder
    fusion: FusionConvs
    optimizer: torch.optim.Adam
    np_rng: np.random.Generator
    torch_gen: torch.Generator


def init_state(cfg: TrainConfig) -> TrainState:
    decoder = Decoder(seed=cfg.seed)
    fusion = FusionConvs(seed=cfg.seed + 1)
    params = list(decoder.parameters())
    if cfg.freeze_fusion:
        for p in fusion.parameters():
            p.requires_grad_(False)
    else:
        params += list(fusion.parameters())
    optimizer = torch.optim.Adam(params, lr=cfg.lr0)
    np_rng = np.random.default_rng(cfg.seed)
    torch_gen = torch.Generator()
    torch_gen.manual_seed(cfg.seed + 2)
    return TrainState(0, decoder, fusion, optimizer, np_rng, torch_gen)


def save_checkpoint(state: TrainState, cfg: TrainConfig, path: str | os.PathLike, preprocess: str = "imagenet") -> None:
    payload = {
        "version": CHECKPOINT_VERSION,
        "iteration": state.iteration,
        "decoder": state.decoder.state_dict(),
        "fusion": state.fusion.state_dict(),
        "optimizer": state.optimizer.state_dict(),
        "torch_rng": state.torch_gen.get_state(),
        "numpy_rng": state.np_rng.bit_generator.state,
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "preprocess": preprocess,
    }
    torch.save(payload, path)


def read_checkpoint(path: str | os.PathLike) -> dict:
    """Load and version-check a checkpoint payload."""
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointIntegrityError(f"cannot read checkpoint {path!r}: {exc}") from exc
    if not isinstance(payload, dict) or "version" not in payload:
        raise CheckpointIntegrityError(f"checkpoint {path!r} has no version field")
    if payload["version"] != CHECKPOINT_VERSION:
        raise VersionError(
            f"checkpoint version {payload['version']} unsupported (expected {CHECKPOINT_VERSION})"
        )
    return payload


def load_checkpoint(path: str | os.PathLike, cfg: TrainConfig) -> TrainState:
    """Rebuild a TrainState from disk; warns when the config hash differs."""
    payload = read_checkpoint(path)
    if payload["config_hash"] != cfg.config_hash():
        warnings.warn(
            f"checkpoint {path!r} was written under config hash {payload['config_hash']}, "
            f"current is {cfg.config_hash()}",
            RuntimeWarning,
        )
    state = init_state(cfg)
    state.decoder.load_state_dict(payload["decoder"])
    state.fusion.load_state_dict(payload["fusion"])
    state.optimizer.load_state_dict(payload["optimizer"])
    state.torch_gen.set_state(payload["torch_rng"])
    state.np_rng.bit_generator.state = payload["numpy_rng"]
    state.iteration = payload["iteration"]
    return state


class TripletFolders:
    """Foreground/mask/background file listing with the gray-background cull."""

    def __init__(self, fg_dir, masks_dir, bg_dir, cull_gray: bool = True):
        self.foregrounds = data_io.list_images(fg_dir)
        self.masks_dir = masks_dir
        backgrounds = data_io.list_images(bg_dir)
        if cull_gray:
            backgrounds = [p for p in backgrounds if not data_io.is_gray_image(data_io.load_image(p))]
        self.backgrounds = backgrounds
        if not self.foregrounds:
            raise ValueError(f"no foreground images under {fg_dir!r}")
        if not self.backgrounds:
            raise ValueError(f"no usable background images under {bg_dir!r}")
        for fg in self.foregrounds:
            if not data_io.mask_path_for(fg, masks_dir).exists():
                raise ValueError(f"foreground {fg.name!r} has no mask in {masks_dir!r}")

    def sample(self, rng: np.random.Generator, size: int, max_tries: int = 10) -> TrainSample:
        for _ in range(max_tries):
            fg_path = self.foregrounds[int(rng.integers(len(self.foregrounds)))]
            bg_path = self.backgrounds[int(rng.integers(len(self.backgrounds)))]
            fg = data_io.load_image(fg_path)
            mask = data_io.load_mask(data_io.mask_path_for(fg_path, self.masks_dir))
            bg = data_io.load_image(bg_path)
            try:
                return make_train_sample(fg, mask, bg, rng, size=size)
            except DegenerateMaskError:
                continue
        raise DegenerateMaskError(f"no usable sample after {max_tries} draws")


def batch_tensors(samples: list[TrainSample]) -> dict[str, torch.Tensor]:
    fg = torch.stack([data_io.to_tensor(s.foreground) for s in samples])
    bg = torch.stack([data_io.to_tensor(s.background) for s in samples])
    mask = torch.stack([torch.from_numpy(s.mask.astype(np.float32)) for s in samples])
    return {"fg": fg, "bg": bg, "mask": mask}


def train_step(
    state: TrainState,
    batch: dict[str, torch.Tensor],
    enc: VggEncoder,
    cfg: TrainConfig,
) -> LossReport:
    """One optimization step over a batch; returns the loss snapshot."""
    fg, bg, mask = batch["fg"], batch["bg"], batch["mask"]
    if fg.shape[0] == 0:
        raise ValueError("empty batch")

    with torch.no_grad():
        ff = enc(fg)
        pyr_b = enc.pyramid(bg)
        sal = spectral_residual_saliency(ff)
        ff_norm = mean_var_normalize(ff)
    fb = pyr_b["relu4_1"]

    fused = similarity_gated_fuse(ff, fb, state.fusion, cfg.window)
    # train on the raw decoder output: a hard [0, 1] clamp saturates early in
    # training and zeroes every gradient; inference clamps at the boundary
    io = state.decoder(concat_mask(fused, mask))
    pyr_o = enc.pyramid(io)
    fo_norm = mean_var_normalize(pyr_o["relu4_1"])
    mask_d = downsample_mask(mask)

    im = immerse_loss(
        fo_norm, ff_norm, sal, mask_d,
        pair_sample_k=cfg.pair_sample_k, generator=state.torch_gen,
    )
    re = remove_loss(pyr_o, pyr_b, sal)
    bp = bpa_loss(pyr_o, pyr_b, cfg.window)
    tv = tv_loss(io)
    total, report = total_loss(im, re, bp, tv, cfg.weights)

    lr = lr_at(cfg, state.iteration)
    for group in state.optimizer.param_groups:
        group["lr"] = lr
    state.optimizer.zero_grad()
    total.backward()
    state.optimizer.step()
    state.iteration += 1
    return report


def train_loop(cfg: TrainConfig) -> Path:
    """Run cfg.max_iters steps, checkpointing and logging; returns the final path."""
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = TripletFolders(
        cfg.foregrounds, cfg.masks, cfg.backgrounds, cull_gray=cfg.cull_gray_backgrounds
    )
    enc_weights = load_encoder(cfg.vgg_weights)
    enc = VggEncoder(enc_weights)
    hash_before = enc.state_hash()

    if cfg.resume:
        state = load_checkpoint(cfg.resume, cfg)
        log_mode = "a"
    else:
        state = init_state(cfg)
        log_mode = "w"

    log_path = out_dir / "train_log.jsonl"
    final_path = out_dir / "checkpoint_final.pt"
    with open(log_path, log_mode) as log:
        while state.iteration < cfg.max_iters:
            samples = [dataset.sample(state.np_rng, cfg.train_size) for _ in range(cfg.batch_size)]
            batch = batch_tensors(samples)
            report = train_step(state, batch, enc, cfg)
            entry = {"iteration": state.iteration, "lr": lr_at(cfg, state.iteration - 1)}
            entry.update(report.to_dict())
            log.write(json.dumps(entry) + "\n")
            if state.iteration % cfg.checkpoint_every == 0 or state.iteration == cfg.max_iters:
                save_checkpoint(
                    state, cfg, out_dir / f"checkpoint_{state.iteration:07d}.pt",
                    preprocess=enc.preprocess,
                )
    save_checkpoint(state, cfg, final_path, preprocess=enc.preprocess)
    if enc.state_hash() != hash_before:
        raise RuntimeError("encoder weights changed during training; they must stay frozen")
    return final_path
