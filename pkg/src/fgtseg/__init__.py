"""Fibroglandular tissue segmentation in breast MRI with a hybrid transformer/CNN network."""

from .errors import DataError, FGTSegError
from .inference import InferenceConfig, predict_case
from .metrics import assd, bpe, breast_density, dice
from .models import build_model, toy_config
from .phantom import PhantomSpec, generate_cohort, generate_phantom
from .training import TrainConfig, train_fold, train_model
from .volumes import BinaryMask, Case, Volume, split_breasts

__version__ = "0.1.0"

__all__ = [
    "BinaryMask", "Case", "DataError", "FGTSegError", "InferenceConfig", "PhantomSpec", "TrainConfig",
    "Volume", "assd", "bpe", "breast_density", "build_model", "dice", "generate_cohort", "generate_phantom",
    "predict_case", "split_breasts", "toy_config", "train_fold", "train_model",
]
