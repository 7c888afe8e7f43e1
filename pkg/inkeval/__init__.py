"""
Evaluation harness: recognition and style scores, trajectory distance, latent export
"""

from inkeval.config import EvalConfig
from inkeval.eval_models import (EvalRecognizer, EvalStyleClassifier, GateResult, train_eval_ocr,
                                 train_eval_style)
from inkeval.harness import (compare_latents, evaluate, export_latents, silhouette_by_label,
                             split_reference, throughput)
from inkeval.metrics import EditOps, EvalReport, ar_cr, centroid_error, char_centroids, edit_ops, norm_dtw

__all__ = [
    "EditOps", "EvalConfig", "EvalRecognizer", "EvalReport", "EvalStyleClassifier", "GateResult", "ar_cr",
    "centroid_error", "char_centroids", "compare_latents", "edit_ops", "evaluate", "export_latents",
    "norm_dtw", "silhouette_by_label", "split_reference", "throughput", "train_eval_ocr", "train_eval_style",
]
