"""Fixed-budget best-arm identification: policies, error-exponent guarantees, Monte Carlo harness."""

from .core import Instance, SortedInstance, as_sorted, kl_bernoulli, log_bar, make_instance, sort_desc
from .guarantees import guarantee_report, rate_cra, rate_crc, rate_sr_kl, rate_sr_pinsker
from .montecarlo import ExperimentConfig, SimResult, estimate_error, generate_instance, run_experiment
from .policies import PolicyKind, policy_init, run_policy

__version__ = "0.1.0"

__all__ = [
    "Instance", "SortedInstance", "as_sorted", "kl_bernoulli", "log_bar", "make_instance", "sort_desc",
    "guarantee_report", "rate_cra", "rate_crc", "rate_sr_kl", "rate_sr_pinsker",
    "ExperimentConfig", "SimResult", "estimate_error", "generate_instance", "run_experiment",
    "PolicyKind", "policy_init", "run_policy",
]
