"""Occupancy-grid SLAM by importance sampling, with a matching simulator,
file formats, and evaluation tools."""

from .algorithms import (Dataset, DeadReckoning, DegeneracyReport, MapAgreementSlam,
                         MotionOnlySlam, StepDiagnostics, StrictConsistencySlam,
                         active_beam_mask, dead_reckon_path, effective_sample_size,
                         filter_redundant, fit_geometry, validate_dataset)
from .eval import (MapScore, PathError, crop_labels, free_space_components,
                   map_accuracy, path_error)
from .geometry import (Cell, GridGeometry, Pose, beam_angle, beam_offsets, cell_of,
                       normalize_angle, padded, raycast)
from .mapping import (CellLabel, LabelingParams, PartialMap, ProbabilisticMap,
                      accumulate_scan, agreement_logweight, apply_scan,
                      consistent_set, label_cell, label_grid, render)
from .models import (LOG_ZERO, Candidate, ConsistentSet, MapPrior, MotionParams,
                     OdometryDelta, PerceptionParams, algo1_theta_logweight,
                     algo2_theta_logweight, compose, motion_sample,
                     perception_logpdf, perception_sample, range_to_cell, resample,
                     sample_prior_map, std_normal_cdf, stream, theta_meters,
                     trgeom_logmass, trgeom_pmf, truncation_normalizer)
from .simulator import (SimConfig, World, drift_config, simulate,
                        single_corridor_waypoints, single_corridor_world,
                        true_range, two_corridor_waypoints, two_corridor_world)

__version__ = "0.1.0"
