"""Mixed-precision post-training quantization toolkit.

Exposes the core operations of the C++ engine: model evaluation and
curvature probes, the fixed-point quantizer, sensitivity analysis, the
bit-width searches, cost estimation, and the artifact pipeline stages.
"""

from mixq._core import (
    ConfigError,
    MixqError,
    Model,
    __version__,
    bisection_search,
    exact_layer_trace,
    forward,
    gradient,
    hutchinson_trace,
    hvp,
    make_demo_inputs,
    pareto_frontier,
    progressive_search,
    quantize_tensor,
    run_stage,
    weight_scales,
)

__all__ = [
    "ConfigError",
    "MixqError",
    "Model",
    "__version__",
    "bisection_search",
    "exact_layer_trace",
    "forward",
    "gradient",
    "hutchinson_trace",
    "hvp",
    "make_demo_inputs",
    "pareto_frontier",
    "progressive_search",
    "quantize_tensor",
    "run_stage",
    "weight_scales",
]
