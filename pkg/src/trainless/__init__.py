"""Fit linear graph models for node classification without gradient descent."""

from .data import Dataset, DatasetError, SynthConfig, load_dataset, save_dataset, synth_qo
from .fit import (FeatureCache, FitConfig, degree_norm_vector, fit_pipeline, fit_trainless,
                  min_norm_oracle, predict_cs, predict_linear, predict_sgc)
from .graph import (CSParams, Graph, build_graph, cs_apply, cs_correct, cs_smooth, label_propagation,
                    normalized_adjacency, sgc_propagate)
from .labels import LabelSet, make_split
from .sparse import SparseMatrix, sp_from_triplets, spmm_dense, sp_transpose
from .train import TrainConfig, landscape_compare, softmax_ce, train_linear, train_pipeline, train_sgc

__version__ = "0.1.0"

__all__ = [
    "Dataset", "DatasetError", "SynthConfig", "load_dataset", "save_dataset", "synth_qo",
    "FeatureCache", "FitConfig", "degree_norm_vector", "fit_pipeline", "fit_trainless",
    "min_norm_oracle", "predict_cs", "predict_linear", "predict_sgc",
    "CSParams", "Graph", "build_graph", "cs_apply", "cs_correct", "cs_smooth", "label_propagation",
    "normalized_adjacency", "sgc_propagate",
    "LabelSet", "make_split",
    "SparseMatrix", "sp_from_triplets", "spmm_dense", "sp_transpose",
    "TrainConfig", "landscape_compare", "softmax_ce", "train_linear", "train_pipeline", "train_sgc",
]
