from networks.graph import ModelGraph
from networks.executor import forward, layer_state
from networks.builders import build, reference_parameter_count

__all__ = [
    "ModelGraph",
    "forward",
    "layer_state",
    "build",
    "reference_parameter_count"
]
