"""
    Policy trainers and the episode runner
"""

from .policy import (
    SINGLE_OBSERVATION, OBSERVATION_HISTORY,
    PolicySpec, TrainedPolicy,
    policy_inputs, history_dropout_mask, train_bc, train_history_dropout, predict
)
from .episode import HistoryBuffer, ExpertPolicy, ConstantPolicy, run_episode
from .dagger import round_quotas, dagger
