"""scikit-learn style wrappers around the degradation pipeline and the two-stage trainer."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .config import load_config
from .degradation import DegradationConfig
from .evalkit import as_upscaler
from .imageops import psnr
from .nets import GeneratorConfig
from .trainer import TrainConfig, finetune, init_state, train
from .validation import check_image, check_image_list

__all__ = ["AdaptiveDegrader", "SuperResolver"]


def _degradation_config(config, probs):
    cfg = load_config(config).degradation if config is not None else load_config().degradation
    if probs is not None:
        cfg = DegradationConfig(cfg.levels, tuple(probs))
    return cfg


class AdaptiveDegrader(TransformerMixin, BaseEstimator):
    """Map HR images to x1/4 LR images through the three-level degradation pipeline.

    Stateless: ``fit`` only validates parameters. The i-th image of every
    ``transform`` call is degraded with seed ``derive(random_state, i)`` so
    output is reproducible per position.

    Parameters
    ----------
    config : path or None
        YAML run config whose ``degradation`` section is used; the shipped
        default when None.
    probs : sequence of 3 floats or None
        Override of the level probabilities.
    random_state : int
        Base seed.
    """

    def __init__(self, config=None, probs=None, random_state=0):
        self.config = config
        self.probs = probs
        self.random_state = random_state

    def fit(self, X=None, y=None):
        self.degradation_ = _degradation_config(self.config, self.probs)
        return self

    def transform(self, X):
        check_is_fitted(self, "degradation_")
        images = check_image_list(X)
        seeds = np.random.SeedSequence(self.random_state).generate_state(len(images), dtype=np.uint64)
        out, draws = [], []
        for img, seed in zip(images, seeds):
            lr, draw = self.degradation_.degrade(img, int(seed))
            out.append(lr)
            draws.append(draw)
        self.draws_ = draws
        return out


class SuperResolver(BaseEstimator):
    """x4 super-resolution model trained by L1 pretraining then adversarial fine-tuning.

    ``fit(X)`` takes a list of HR RGB images; LR inputs are synthesized on the
    fly by the adaptive degradation pipeline. ``predict`` maps LR images to
    SR images and ``score`` returns mean PSNR (dB) against HR targets.
    """

    def __init__(self, pretrain_iterations=100, finetune_iterations=0, batch_size=4, patch_size=64,
                 learning_rate=1e-4, generator=None, config=None, random_state=0):
        self.pretrain_iterations = pretrain_iterations
        self.finetune_iterations = finetune_iterations
        self.batch_size = batch_size
        self.patch_size = patch_size
        self.learning_rate = learning_rate
        self.generator = generator
        self.config = config
        self.random_state = random_state

    def _stage_config(self, base: TrainConfig, iterations: int) -> TrainConfig:
        d = base.to_dict()
        d.update(iterations=iterations, batch=self.batch_size, patch_size=self.patch_size,
                 lr=self.learning_rate, seed=self.random_state, checkpoint_every=0)
        return TrainConfig.from_dict(d)

    def fit(self, X, y=None):
        images = check_image_list(X)
        run = load_config(self.config)
        gen_cfg = GeneratorConfig.from_dict(self.generator) if isinstance(self.generator, dict) else (
            self.generator or run.generator)
        if self.pretrain_iterations < 1:
            raise ValueError("pretrain_iterations must be >= 1")
        pre_cfg = self._stage_config(run.pretrain, self.pretrain_iterations)
        state = train(init_state(pre_cfg, gen_cfg), images, run.degradation, pre_cfg)
        self.pretrain_log_ = state.loss_log
        self.finetune_log_ = []
        if self.finetune_iterations > 0:
            ft_cfg = self._stage_config(run.finetune, self.finetune_iterations)
            state = finetune(images, ft_cfg, state, run.degradation, run.discriminator, run.wavelet)
            self.finetune_log_ = state.loss_log
        self.generator_ = state.generator.eval()
        self.n_iter_ = self.pretrain_iterations + self.finetune_iterations
        return self

    def predict(self, X):
        check_is_fitted(self, "generator_")
        upscale = as_upscaler(self.generator_)
        return [upscale(img) for img in check_image_list(X)]

    def score(self, X, y):
        """Mean RGB PSNR of ``predict(X)`` against ``y``."""
        targets = check_image_list(y)
        preds = self.predict(X)
        if len(preds) != len(targets):
            raise ValueError(f"got {len(preds)} inputs but {len(targets)} targets")
        return float(np.mean([psnr(p, t) for p, t in zip(preds, targets)]))
