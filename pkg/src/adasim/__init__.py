"""
adasim: zero-shot recognition with an adaptive bilinear similarity
"""
from adasim.adapt import (
    adapt_alternating,
    adapt_closed_form,
    assemble_joint_system,
    assemble_pair,
    score_matrix,
    similarity,
)
from adasim.core import ClassEmbedding, Dataset, DomainSpec, EmbeddedInstance, OmegaParams, WeightModel
from adasim.errors import AdasimError, NotPositiveDefiniteError, NumericalError, ValidationError
from adasim.learn import TrainConfig, train
from adasim.modelselect import GridSpec, select_omega
from adasim.zsr import evaluate, predict, predict_batch

__version__ = "0.1.0"
