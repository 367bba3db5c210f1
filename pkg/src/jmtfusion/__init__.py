"""Joint multimodal transformer fusion on a small numpy autodiff engine."""

from .errors import (AlignmentError, CheckpointError, ConfigError, InputError, JMTError, NumericError,
                     ShapeError, UsageError)
from .fusion import FusionConfig, JointFusionModel, VanillaFusionModel, build_model, jmt_forward
from .losses import MetricsRecord, accuracy, ccc, ccc_loss
from .tensor import Tensor, backward, check_gradients, no_grad

__version__ = "0.1.0"
