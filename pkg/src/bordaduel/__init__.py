"""Borda-regret minimization for generalized linear dueling bandits."""

from .algorithms import (
    Bexp3,
    Bexp3Config,
    BetcConfig,
    BetcGlm,
    EtcBorda,
    EtcBordaConfig,
    Regime,
    UcbBorda,
    UcbBordaConfig,
    betc_glm_run,
    betc_params,
    etc_borda_run,
    make_agent,
    run_agent,
)
from .design import Design, allocation, frank_wolfe, frank_wolfe_design, g_value, info_matrix
from .estimation import SampleLog, estimate_borda, mle_glm, mle_linear
from .instances import (
    EmpiricalCounts,
    HardInstanceSpec,
    bit_vector,
    fit_env_from_counts,
    lambda0,
    make_hard_instance,
    make_random_glm,
)
from .model import (
    AdversarialEnv,
    FeatureSet,
    LinkFunction,
    RegretTrace,
    StochasticEnv,
    borda_scores,
    preference_prob,
    record_step,
    sample_duel,
)

__version__ = "0.1.0"
