"""Training, model selection, checkpoints and the command-line interface."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import PRESETS, BackboneConfig, RunConfig, load_config, preset
from .experiments import ablation_run, grid_search, kfold_run
from .optim import SGD, Adam, make_optimizer
from .training import FeatureSet, TrainResult, compute_features, train
