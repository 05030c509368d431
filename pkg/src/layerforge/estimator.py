"""Scikit-learn style estimator wrapping training and sampling.

``LayerDecomposer.fit(X, y)`` trains the flow-matching decomposer on
composites ``X`` with layer targets ``y = (foregrounds, backgrounds)``;
``predict(X)`` returns sampled backgrounds and ``decompose(X)`` both layers.
Hyperparameters follow the sklearn convention (stored as given, work in
``fit``), so the estimator composes with ``get_params``/``set_params``,
``clone`` and friends.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .flow import TrainConfig, train
from .model import ModelConfig, init_state, n_params
from .sampler import SamplerConfig, sample
from .metrics import ssim
from .validation import as_image, derive_seed

__all__ = ["LayerDecomposer"]


class LayerDecomposer(BaseEstimator):
    """Joint foreground/background decomposer with a fit/predict interface.

    Parameters mirror the model, training, and sampler configs. ``subtask``
    names the blend family the training triplets come from; the fitted model
    conditions its prompt tokens on it.
    """

    def __init__(
        self,
        subtask: str = "occlusion",
        dim: int = 64,
        heads: int = 4,
        blocks: int = 2,
        mlp_ratio: float = 2.0,
        patch: int = 4,
        prompt_tokens: int = 4,
        pe_cloning: str = "offset",
        train_steps: int = 2000,
        batch_size: int = 1,
        lr: float = 1e-3,
        sampler_method: str = "euler",
        sampler_steps: int = 16,
        eta: float = 0.0,
        seed: int = 0,
    ):
        self.subtask = subtask
        self.dim = dim
        self.heads = heads
        self.blocks = blocks
        self.mlp_ratio = mlp_ratio
        self.patch = patch
        self.prompt_tokens = prompt_tokens
        self.pe_cloning = pe_cloning
        self.train_steps = train_steps
        self.batch_size = batch_size
        self.lr = lr
        self.sampler_method = sampler_method
        self.sampler_steps = sampler_steps
        self.eta = eta
        self.seed = seed

    def _validate_batch(self, X, channels: int, name: str) -> np.ndarray:
        arr = np.asarray(X, dtype=np.float64)
        if arr.ndim == 3:
            arr = arr[None]
        if arr.ndim != 4:
            raise ValueError(f"{name}: expected (n, H, W, {channels}) array, got shape {arr.shape}")
        for i in range(arr.shape[0]):
            as_image(arr[i], channels=channels, name=f"{name}[{i}]")
        return arr

    def fit(self, X, y):
        """Train on composites ``X`` and targets ``y = (fg RGBA, bg RGB)``."""
        Z = self._validate_batch(X, 3, "X")
        if not isinstance(y, (tuple, list)) or len(y) != 2:
            raise ValueError("y must be a (foregrounds, backgrounds) pair")
        F = self._validate_batch(y[0], 4, "y[0]")
        B = self._validate_batch(y[1], 3, "y[1]")
        if not (len(Z) == len(F) == len(B)):
            raise ValueError(f"length mismatch: X {len(Z)}, y[0] {len(F)}, y[1] {len(B)}")
        cfg = ModelConfig(
            dim=self.dim,
            heads=self.heads,
            blocks=self.blocks,
            mlp_ratio=self.mlp_ratio,
            patch=self.patch,
            prompt_tokens=self.prompt_tokens,
            pe_cloning=self.pe_cloning,
            seed=derive_seed(self.seed, "model"),
        )
        state = init_state(cfg)
        records = [(F[i], B[i], Z[i], self.subtask) for i in range(len(Z))]
        tcfg = TrainConfig(
            steps=self.train_steps,
            batch_size=self.batch_size,
            lr=self.lr,
            seed=derive_seed(self.seed, "train"),
        )
        _, trace = train(state, records, tcfg)
        self.state_ = state
        self.loss_trace_ = trace
        self.n_params_ = n_params(state)
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "state_"):
            raise NotFittedError("LayerDecomposer is not fitted; call fit first")

    def decompose(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Sample (foregrounds RGBA, backgrounds RGB) for composites ``X``."""
        self._check_fitted()
        Z = self._validate_batch(X, 3, "X")
        fgs, bgs = [], []
        for i in range(Z.shape[0]):
            cfg = SamplerConfig(
                method=self.sampler_method,
                steps=self.sampler_steps,
                eta=self.eta,
                seed=derive_seed(self.seed, f"sample-{i}"),
            )
            fg, bg = sample(self.state_, Z[i], self.subtask, cfg)
            fgs.append(fg)
            bgs.append(bg)
        return np.stack(fgs), np.stack(bgs)

    def predict(self, X) -> np.ndarray:
        """Sampled backgrounds for composites ``X``; shape (n, H, W, 3)."""
        return self.decompose(X)[1]

    def score(self, X, y) -> float:
        """Mean SSIM of predicted backgrounds against true backgrounds ``y``."""
        B = self._validate_batch(y, 3, "y")
        preds = self.predict(X)
        return float(np.mean([ssim(preds[i], B[i]) for i in range(len(B))]))
