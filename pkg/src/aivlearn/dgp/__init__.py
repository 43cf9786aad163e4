"""Simulation designs and exactly enumerable oracle laws."""

from .oracle import ORACLES, DiscreteOracleSpec, LongitudinalOracleSpec, enumerate_oracle, sample_oracle
from .simulate import (DGP_NAMES, LongitudinalDGPSpec, PointDGPSpec, compute_truth_by_intervention,
                       generate_longitudinal, generate_point, stream)
