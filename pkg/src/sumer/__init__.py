"""Self-updating models with error remediation: library + experiment harness."""

from .data import (Dataset, Instance, LabelRecord, LabelState, SplitSpec,
                   class_summary, derive_rng, split_dataset)
from .engine import (EngineConfig, GateSpec, RemediationSpec, Trace,
                     CoverageScorer, coverage_confidence, run_experiment,
                     self_label, single_round_sum)
from .errors import SumerError, ValidationError
from .learners import (ForestSpec, KNNSpec, TreeSpec, fit, fit_arrays,
                       load_model, predict, save_model)
from .remediation import (CouplingReport, NoiseEstimate, PruneResult,
                          coupling_report, cross_val_proba,
                          estimate_noise_rates, rank_prune, spread_correct)
from .spreading import SpreadSpec, SpreadResult, label_spread, spread_arrays
from .synth import (GaussianSpec, MoonsSpec, NoiseSpec, StreamPlan,
                    gen_two_gaussians, gen_two_moons, inject_noise,
                    plan_stream)

__version__ = "0.1.0"
