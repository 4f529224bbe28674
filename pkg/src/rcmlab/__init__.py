"""Simulation and numerical validation toolkit for the random
connection model over stationary Poisson processes."""

from .analysis import (DifferenceSample, EvaluationContext, FunctionalSpec,
                       Standardization, birth_time_variance, cluster_tail,
                       difference, dkw_bound, empirical_distance, evaluate,
                       fourth_moment_bound, gamma_terms,
                       pilot_standardization, poincare_bound,
                       second_difference)
from .census import (CensusReport, GraphClass, canonical_form, census,
                     components, edge_class, enumerate_classes, path_class,
                     single_vertex_class, weighted_count)
from .connection import ConnectionFunction
from .experiments import (ConfigError, ExperimentResult, Scenario,
                          covariance_experiment, emit, expectation_experiment,
                          load_scenario, run_scenario,
                          total_components_experiment)
from .geometry import Window, unit_ball_volume
from .marks import PairMarkSource
from .moments import (MomentEstimate, asy_cov, asy_cov_kl,
                      asy_var_quadratic, expected_count_intensity,
                      finite_window_cross_moment, inner_exponent,
                      sigma_total_partial)
from .sampling import (PointSet, RcmGraph, build_coupled, build_rcm,
                       sample_poisson)

__version__ = "0.1.0"
