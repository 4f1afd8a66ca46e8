"""Cycle-by-cycle multi-phase traffic demand estimation from connected-vehicle trajectories.

JO-MAP jointly estimates the demands of all phases of a signalized
intersection in each cycle from the queuing positions and expected arrival
times of queued CVs, with a Gaussian prior on phase shares built from
historical CV counts. WMLE (single phase) and JO-MLE (shares fixed at the
prior means) are the baselines.
"""

from .domain import (CycleTiming, PhaseConfig, PlanError, SignalPlan, Trajectory, TrajectoryError,
                     TrajectoryPoint, ValidatedPlan, locate_cycle, validate_signal_plan)
from .estimators import (JOMAP, JOMLE, METHODS, WMLE, DemandEstimate, SolverConfig, SufficientStats,
                         ThetaEstimate, alpha_positive_root, jomap, jomle, log_posterior,
                         log_posterior_gradient, solve_map, sufficient_stats, wmle)
from .evaluation import Metrics, SweepResult, compute_metrics, emit_report, prepare_scenario, run_sweep
from .initial_queue import (InitialQueueState, adjust_observations, conservation_estimate, cv_bounds,
                            finalize_initial_queue)
from .kernels import BACKEND
from .pipeline import HistoricalModel, build_historical, estimate_cycles, group_evidence, prepare_population
from .prior import PhaseCountSeries, PriorSpec, build_alpha_prior, build_prior, lambda0_support
from .profile import ArrivalProfile, build_profile, cumulative_arrivals, observation_weights
from .scenarios import reference_scenario
from .sim import GroundTruth, ScenarioConfig, generate_arrivals, sample_cvs, simulate, simulate_intersection
from .trajectory import (ArrivalObservation, CvKind, CvType, InsufficientDataError, QueueEvent,
                         classify_cv, derive_observation, detect_queue_events, fit_saturation_rate)

__version__ = "0.1.0"
