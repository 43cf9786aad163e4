"""Debiased estimation of causal effects with additive instrumental variables."""

__version__ = "0.1.0"

from .data import (DataError, EstimateReport, FoldAssignment, PanelDataset, PointDataset, load_panel_csv,
                   load_point_csv, make_folds, write_panel_csv, write_point_csv)
from .longitudinal import (estimate_longitudinal_adaptive, estimate_longitudinal_dtr,
                           estimate_longitudinal_family, estimate_longitudinal_static)
from .nuisance import RegressorSpec, WeakInstrumentError
from .point import (diagnose_aiv, diagnose_latent_confounding, estimate_ate_adaptive, estimate_ate_fixed_pi,
                    estimate_dose_response, estimate_mean_po, estimate_mean_po_miv, estimate_point_family,
                    pairs_bootstrap)
from .regimes import DynamicRegime, StaticRegime
from .weights import WeightingFunctionSpec

__all__ = [
    "DataError", "EstimateReport", "FoldAssignment", "PanelDataset", "PointDataset", "load_panel_csv",
    "load_point_csv", "make_folds", "write_panel_csv", "write_point_csv", "estimate_longitudinal_adaptive",
    "estimate_longitudinal_dtr", "estimate_longitudinal_family", "estimate_longitudinal_static",
    "RegressorSpec", "WeakInstrumentError", "diagnose_aiv", "diagnose_latent_confounding",
    "estimate_ate_adaptive", "estimate_ate_fixed_pi", "estimate_dose_response", "estimate_mean_po",
    "estimate_mean_po_miv", "estimate_point_family", "pairs_bootstrap", "DynamicRegime", "StaticRegime",
    "WeightingFunctionSpec",
]
