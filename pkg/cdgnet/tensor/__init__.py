from cdgnet.tensor.core import Graph, Tensor, backward, default_dtype, no_grad, precision
from cdgnet.tensor.gradcheck import GradCheckReport, away_from_kinks, grad_check, grad_check_report
from cdgnet.tensor.ops import (
    absolute,
    activation,
    concat,
    conv2d,
    conv_transpose2d,
    ewise,
    global_avg_pool,
    mean,
    reduce_sum,
    relu,
    scale,
    sigmoid,
)

__all__ = (
    "Graph",
    "GradCheckReport",
    "Tensor",
    "absolute",
    "activation",
    "away_from_kinks",
    "backward",
    "concat",
    "conv2d",
    "conv_transpose2d",
    "default_dtype",
    "ewise",
    "global_avg_pool",
    "grad_check",
    "grad_check_report",
    "mean",
    "no_grad",
    "precision",
    "reduce_sum",
    "relu",
    "scale",
    "sigmoid",
)
