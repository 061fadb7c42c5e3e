"""Offline influence learning: datasets, recurrent predictors, baselines and the exact oracle."""
from iaplan.influence.dataset import InfluenceDataset, collect_dataset, uniform_policy
from iaplan.influence.oracle import ExactGacInfluence, exact_influence_gac, reachable_histories
from iaplan.influence.predictors import LearnedInfluence, UniformInfluence, uniform_predictor
from iaplan.influence.rnn import (
    LearningCurve,
    RnnPredictor,
    TrainConfig,
    init_predictor,
    loss_and_grads,
    rnn_forward,
    head_cross_entropy,
    sequence_loss,
    train,
    zero_predictor,
)

__all__ = [
    "ExactGacInfluence",
    "InfluenceDataset",
    "LearnedInfluence",
    "LearningCurve",
    "RnnPredictor",
    "TrainConfig",
    "UniformInfluence",
    "collect_dataset",
    "exact_influence_gac",
    "init_predictor",
    "loss_and_grads",
    "reachable_histories",
    "rnn_forward",
    "head_cross_entropy",
    "sequence_loss",
    "train",
    "uniform_policy",
    "uniform_predictor",
    "zero_predictor",
]
