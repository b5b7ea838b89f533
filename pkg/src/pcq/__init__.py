"""Speech emotion recognition by progressive channel querying, on a small numpy autodiff core."""

from .network import PcqConfig, PcqNetwork, clip_prediction, miniature_config
from .tensor import Tensor, no_grad
from .training import TrainConfig, build_dataset, run_cv, run_fold

__version__ = "0.1.0"

__all__ = [
    "PcqConfig", "PcqNetwork", "Tensor", "TrainConfig", "build_dataset",
    "clip_prediction", "miniature_config", "no_grad", "run_cv", "run_fold",
    "__version__",
]
