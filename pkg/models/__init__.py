"""
Model architectures and checkpoints
"""

from models.builders import build, count_params, model_specs
from models.checkpoint import load_checkpoint, load_training_state, save_checkpoint
from models.network import Network

__all__ = ["Network", "build", "count_params", "load_checkpoint", "load_training_state", "model_specs", "save_checkpoint"]
