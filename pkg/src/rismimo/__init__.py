"""Link-level simulator for RIS-assisted uplink massive MIMO.

Building blocks: spatial correlation models (`arrays`), multi-specular channel
statistics and sampling (`channel`), pilot protocols and LMMSE/LS estimation
(`estimation`), closed-form reflection-phase selection (`phases`), receive
combining and ergodic SE evaluation (`combining`), max-min fair power control
(`power`), and the scenario-driven experiment harness (`harness`, `scenario`,
`cli`).
"""

from .arrays import (ArrayGeometry, ScatteringSpec, array_response,
                     correlation_closed_form, correlation_numeric,
                     kronecker_nonspecular_sample)
from .channel import (BsRisLinkStats, ChannelRealization, RisAssignment,
                      SetupStatistics, VectorLinkStats, build_statistics,
                      cascaded_channel, overall_channel, sample_realization)
from .combining import SinrAccumulator, combine_ammse, combine_mr, combine_rzf, se_from_sinr
from .errors import (AssignmentError, ConfigError, DegenerateSpreadError,
                     NotPsdError, RisMimoError)
from .estimation import OverallEstimator, PilotPlan, ShortTermEstimator
from .harness import RunResult, emit_results, load_results, run_drop, run_experiment
from .phases import (PhaseConfig, RelaxedSolution, ps1_project, ps_longterm,
                     ps_per_element, ps_random, ps_zero, solve_relaxed)
from .power import PowerSolution, SinrCoefficients, maxmin_fixed_point, sinr_from_powers
from .scenario import Scenario, desk_scenario, load_scenario, paper_scenario, save_scenario

__version__ = "0.1.0"

__all__ = [
    "ArrayGeometry", "ScatteringSpec", "array_response", "correlation_closed_form",
    "correlation_numeric", "kronecker_nonspecular_sample",
    "BsRisLinkStats", "ChannelRealization", "RisAssignment", "SetupStatistics",
    "VectorLinkStats", "build_statistics", "cascaded_channel", "overall_channel",
    "sample_realization",
    "SinrAccumulator", "combine_ammse", "combine_mr", "combine_rzf", "se_from_sinr",
    "AssignmentError", "ConfigError", "DegenerateSpreadError", "NotPsdError",
    "RisMimoError",
    "OverallEstimator", "PilotPlan", "ShortTermEstimator",
    "RunResult", "emit_results", "load_results", "run_drop", "run_experiment",
    "PhaseConfig", "RelaxedSolution", "ps1_project", "ps_longterm", "ps_per_element",
    "ps_random", "ps_zero", "solve_relaxed",
    "PowerSolution", "SinrCoefficients", "maxmin_fixed_point", "sinr_from_powers",
    "Scenario", "desk_scenario", "load_scenario", "paper_scenario", "save_scenario",
    "__version__",
]
