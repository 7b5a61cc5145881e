"""Dynamic community detection: attention encoders, adversarial prior matching, soft modularity."""

from .ablation import ROWS as ABLATION_ROWS, expand
from .config import ExperimentConfig
from .encoder import EncoderConfig, encode, init_encoder
from .graph import DynamicGraph, GraphSnapshot, RawSignalSet, load_dynamic_graph, save_dynamic_graph
from .metrics import MetricsReport, evaluate, nmi, pairwise_f1
from .modularity import modularity_q
from .synth import DynSbmConfig, generate
from .trainer import TrainConfig, detect, detect_kmeans, train

__version__ = "0.1.0"

__all__ = [
    "ABLATION_ROWS",
    "DynSbmConfig",
    "DynamicGraph",
    "EncoderConfig",
    "ExperimentConfig",
    "GraphSnapshot",
    "MetricsReport",
    "RawSignalSet",
    "TrainConfig",
    "detect",
    "detect_kmeans",
    "encode",
    "evaluate",
    "expand",
    "generate",
    "init_encoder",
    "load_dynamic_graph",
    "modularity_q",
    "nmi",
    "pairwise_f1",
    "save_dynamic_graph",
    "train",
]
