"""Weight-scaled deep-unfolded MIMO detection with classical baselines."""

from .baselines import SdrConfig, ml_detect, mmse_detect, sdr_detect, zf_detect
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .estimator import (
    MLDetector, MMSEDetector, SDRDetector, WeSNetDetector, ZeroForcingDetector,
    pack_problems, unpack_problems,
)
from .exceptions import (
    CapacityError, CheckpointError, ConfigError, ContractError, NumericalError, WesnetError,
)
from .mimo import BPSK, QAM4, generate_batch
from .network import NetConfig, TrainConfig, detect, train

__version__ = "0.1.0"

__all__ = [
    "SdrConfig", "zf_detect", "mmse_detect", "ml_detect", "sdr_detect",
    "Checkpoint", "save_checkpoint", "load_checkpoint",
    "ZeroForcingDetector", "MMSEDetector", "MLDetector", "SDRDetector", "WeSNetDetector",
    "pack_problems", "unpack_problems",
    "WesnetError", "ConfigError", "ContractError", "NumericalError", "CapacityError",
    "CheckpointError", "BPSK", "QAM4", "generate_batch",
    "NetConfig", "TrainConfig", "detect", "train",
]
