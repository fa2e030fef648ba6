"""Permutation-invariant set-attention ranking.

Subpackage map:

* :mod:`setrank.autodiff` -- 2-D tensors, taped reverse-mode gradients, Adam.
* :mod:`setrank.backend` -- compiled vs pure NumPy kernel selection.
* :mod:`setrank.data` -- LETOR/SVMlight parsing, scaling, truncation,
  initial-ranking sidecars.
* :mod:`setrank.model` -- the set-attention scoring function (self-attention
  and induced-attention blocks), checkpoints.
* :mod:`setrank.training` -- attention-rank listwise loss and the train loop.
* :mod:`setrank.evaluation` -- NDCG, robustness / size-adaptation
  experiments, synthetic cross-document task.
* :mod:`setrank.cli` -- the ``setrank`` command-line entry point.
"""

from . import backend
from .autodiff import AdamState, Graph, Tensor, adam_step, backward, finite_diff_check
from .data import Dataset, FeatureScaler, QueryGroup, load_dataset
from .errors import (CheckpointError, ConfigError, DataError, NumericError,
                     SetRankError, ShapeError)
from .evaluation import MetricReport, PerturbationSpec, evaluate, ndcg_at_k, synth_generate
from .model import ModelConfig, ModelParams, init_params, load_checkpoint, rank, save_checkpoint, score
from .training import LossReport, TrainConfig, train_loop

__version__ = "0.1.0"
