"""Four-cable suspended robot: exact kinematics, synthetic rotation data,
a numpy MLP regressor and its 8-bit weight-quantized deployment form."""

from .datagen import Dataset, GridSpec, generate, split
from .kinematics import Point3, RobotBox, Rig, Rotations, StringLengths
from .model import MlpModel, TrainConfig, fit_linear, forward, init_mlp, train
from .quant import QuantizedModel, deserialize, quantize, serialize

__all__ = [
    "Dataset", "GridSpec", "generate", "split",
    "Point3", "RobotBox", "Rig", "Rotations", "StringLengths",
    "MlpModel", "TrainConfig", "fit_linear", "forward", "init_mlp", "train",
    "QuantizedModel", "deserialize", "quantize", "serialize",
]
