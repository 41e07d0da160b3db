"""Multi-task drug-target binding affinity models on a small float64
autodiff core, with missing-label-aware losses and an evaluation suite."""

from . import data, layers, losses, metrics, optim, smiles, tensor, train

__all__ = ["data", "layers", "losses", "metrics", "optim", "smiles",
           "tensor", "train"]
__version__ = "0.1.0"
