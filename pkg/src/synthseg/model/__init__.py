"""Point-wise classifier: features, a small MLP trained with Adam, prediction."""

from synthseg.model.features import FEATURE_NAMES, N_FEATURES, extract_features, features_from_arrays
from synthseg.model.mlp import (AdamState, MlpClassifier, ModelError, adam_step, forward,
                                load_checkpoint, loss_and_grad, predict_labels, save_checkpoint,
                                softmax)
from synthseg.model.train import (EpochLog, TrainConfig, TrainResult, class_weights, evaluate,
                                  predict_cloud, train)

__all__ = [
    "FEATURE_NAMES", "N_FEATURES", "extract_features", "features_from_arrays",
    "AdamState", "MlpClassifier", "ModelError", "adam_step", "forward", "load_checkpoint",
    "loss_and_grad", "predict_labels", "save_checkpoint", "softmax",
    "EpochLog", "TrainConfig", "TrainResult", "class_weights", "evaluate", "predict_cloud", "train",
]
