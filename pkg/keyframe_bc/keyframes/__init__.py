"""
    Keyframe scoring: copycat predictor, action prediction error and loss-weight schemes
"""

from .copycat import (
    CopycatSpec, CopycatFit, ApeTable, CopycatVerdict,
    train_copycat, compute_ape, copycat_condition, constant_mean_mse, copycat_inputs
)
from .weighting import (
    UNIFORM, SOFTMAX, STEP, BCPD, ACTFREQ, BOOSTING,
    WeightScheme, WeightTable,
    softmax_weights, step_weights, top_count, kmeans, actfreq_weights, build_weight_table
)
from .bcpd import changepoint_posterior, bcpd_brute_force, bcpd_scores
from .boosting import boosting_update, boosting_weights
