"""Conditional-mean learners and cross-fitted nuisance bundles."""

from .bundles import (AdaptiveNuisanceBundle, FixedPiNuisanceBundle, FoldRegressions, WeakInstrumentError,
                      fit_adaptive_bundle, fit_fixed_pi_bundle, floor_kappa)
from .spline import (AdditiveSplineModel, InsufficientDataError, LocalLinearModel, NuisanceModel, RegressorSpec,
                     fit_conditional_mean)
