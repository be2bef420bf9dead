from training.optimizers import SGD, Adam, Optimizer, build_optimizer, learning_rate
from training.checkpoint import Checkpoint
from training.trainer import Trainer, build_model, predict_logits, train_bnn_stage, train_teacher
from training.evaluation import evaluate, layer_reports, overall_sign_flip, sign_flip_by_layer
from training.pipeline import PipelineResult, run_bdbnn, write_metrics
from training.ablation import SUITES, run_ablation, suite_variants, summarize

__all__ = [
    "SGD",
    "Adam",
    "Optimizer",
    "build_optimizer",
    "learning_rate",
    "Checkpoint",
    "Trainer",
    "build_model",
    "predict_logits",
    "train_bnn_stage",
    "train_teacher",
    "evaluate",
    "layer_reports",
    "overall_sign_flip",
    "sign_flip_by_layer",
    "PipelineResult",
    "run_bdbnn",
    "write_metrics",
    "SUITES",
    "run_ablation",
    "suite_variants",
    "summarize"
]
