"""Inference-time selection policies, their reward/KL analytics, and
calibration of the reward-hacking threshold."""

from .discrete import (
    CheckResult,
    DiscreteBase,
    check_score_monotone,
    check_tp2,
    count_extrema,
    discrete_bop_kl,
    discrete_policy_pmf,
    discrete_reward_curve,
)
from .exceptions import ConfigurationError, DataError, DomainError, HedgeKitError, UnsupportedKindError
from .hedgetune import (
    CalibrationResult,
    HedgeData,
    Regime,
    best_integer_n,
    classify_regime,
    expected_truth,
    find_threshold,
    residual,
)
from .io import DatasetManifest, RewardCurvePoint, load_pools, write_pools, write_report
from .optimality import MatchResult, kl_gap_sweep, match_lambda, sup_log_ratio
from .policies import PolicyKind, PolicySpec, policy_density, policy_kl, policy_mean, score
from .quantiles import QuantileMap, to_quantiles
from .samplers import (
    Candidate,
    CandidatePool,
    Selection,
    choose_argmax,
    choose_softmax,
    sample_poisson_size,
    select,
    select_many,
)
from .softmax import Estimate, McConfig, log_partition, sbon_mean_kl, sbop_mean_kl
from .special import SpecialValue, expi
from .toy import ToyConfig, generate_toy, toy_truth

__version__ = "0.1.0"
