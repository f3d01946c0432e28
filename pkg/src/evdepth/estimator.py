"""scikit-learn style front door.

``EventVoxelizer`` turns raw event arrays into network-ready voxel grids
and composes with sklearn pipelines; ``EventDepthEstimator`` wraps the
full train/predict cycle behind fit/predict with ``get_params`` support,
so the model slots into the wider estimator ecosystem. The heavy lifting
lives in the subsystem modules.
"""

from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np
import torch
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .events import EventWindow, voxelize
from .validation import check_event_array


class EventVoxelizer(TransformerMixin, BaseEstimator):
    """Stateless transformer from event arrays to voxel grids.

    Each input is either an ``EventWindow`` or an (N, 4) array with
    columns t, x, y, p; raw arrays are treated as one window of
    ``window_seconds`` ending at their last timestamp.
    """

    def __init__(self, num_bins=5, height=None, width=None,
                 window_seconds=0.05, origin="window"):
        self.num_bins = num_bins
        self.height = height
        self.width = width
        self.window_seconds = window_seconds
        self.origin = origin

    def fit(self, X=None, y=None):
        if self.height is None or self.width is None:
            raise ValueError("height and width must be set")
        return self

    def transform(self, X):
        self.fit()
        if isinstance(X, (np.ndarray, EventWindow)):
            X = [X]
        grids = [self._encode(item) for item in X]
        return np.stack(grids) if grids else \
            np.zeros((0, self.num_bins, self.height, self.width), dtype=np.float32)

    def _encode(self, item):
        if not isinstance(item, EventWindow):
            arr = check_event_array(item)
            t_end = float(arr[-1, 0]) if arr.shape[0] else self.window_seconds
            item = EventWindow(arr, t_end - self.window_seconds, t_end)
        return voxelize(item, self.num_bins, self.height, self.width,
                        origin=self.origin).data


class EventDepthEstimator(BaseEstimator):
    """Self-supervised event-to-depth model with a fit/predict surface.

    ``fit`` trains on a dataset directory in the canonical on-disk layout
    (see the data module); ``predict`` maps voxel grids to depth maps.
    A previously trained checkpoint can be attached with :meth:`load`.
    """

    def __init__(self, num_bins=5, window_seconds=0.05, d_min=0.1, d_max=100.0,
                 scales=4, epochs=1, batch_size=4, lr_initial=1e-4, lr_final=1e-5,
                 lr_drop_epoch=8, beta1=0.9, beta2=0.999, profile="none", seed=0,
                 ablation="cross-modal", max_steps=None, work_dir=None):
        self.num_bins = num_bins
        self.window_seconds = window_seconds
        self.d_min = d_min
        self.d_max = d_max
        self.scales = scales
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr_initial = lr_initial
        self.lr_final = lr_final
        self.lr_drop_epoch = lr_drop_epoch
        self.beta1 = beta1
        self.beta2 = beta2
        self.profile = profile
        self.seed = seed
        self.ablation = ablation
        self.max_steps = max_steps
        self.work_dir = work_dir

    def _train_config(self):
        from .train import TrainConfig

        return TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size,
            lr_initial=self.lr_initial, lr_final=self.lr_final,
            lr_drop_epoch=self.lr_drop_epoch, betas=(self.beta1, self.beta2),
            scales=self.scales, d_min=self.d_min, d_max=self.d_max,
            profile=self.profile, seed=self.seed, ablation=self.ablation,
            num_bins=self.num_bins, window_seconds=self.window_seconds,
        )

    def fit(self, X, y=None):
        """Train on a dataset rooted at path ``X``; returns self."""
        from .train import fit as train_fit

        out_dir = Path(self.work_dir) if self.work_dir else \
            Path(tempfile.mkdtemp(prefix="evdepth-"))
        result = train_fit(self._train_config(), X, out_dir,
                           max_steps=self.max_steps)
        return self.load(result["checkpoint"])

    def load(self, checkpoint):
        """Attach a trained checkpoint; returns self (fitted)."""
        from .models import load_checkpoint, restore_networks

        payload = load_checkpoint(checkpoint)
        self.depth_net_, self.pose_net_, self.manifest_ = restore_networks(payload)
        self.checkpoint_ = str(checkpoint)
        return self

    def _check_fitted(self):
        if not hasattr(self, "depth_net_"):
            raise NotFittedError("call fit() or load() before predict()")

    def predict(self, X):
        """Depth maps for voxel grids of shape (n, B, H, W) or (B, H, W)."""
        self._check_fitted()
        voxels = torch.as_tensor(np.asarray(X, dtype=np.float32))
        squeeze = voxels.ndim == 3
        if squeeze:
            voxels = voxels.unsqueeze(0)
        d_min = float(self.manifest_.get("d_min", self.d_min))
        d_max = float(self.manifest_.get("d_max", self.d_max))
        with torch.no_grad():
            _, depth = self.depth_net_.forward_depth(voxels, d_min, d_max)
        out = depth.values.numpy()
        return out[0] if squeeze else out
