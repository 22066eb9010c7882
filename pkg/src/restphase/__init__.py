"""Resting-phase detection in cardiac CINE series.

The pipeline tracks a target landmark, crops a fixed-size ROI around it,
registers consecutive frames, turns the deformation fields into one motion
value per frame transition and thresholds that curve into resting phases.
"""

from .calibration import (ConfusionMatrix, LabeledTransition, RpAgreement, SweepResult,
                          confusion_matrix, rp_agreement, threshold_sweep, variant_sweep)
from .classification import RestingPhaseSet, RestInterval, RpParams, classify_rp
from .core import CineSeries, LandmarkTrack, PixelPoint, Roi, min_max_normalize
from .errors import RestPhaseError
from .localization import NccTemplateLocalizer, PropagationLocalizer, distance_error
from .motion import MotionCurve, MotionVariant, motion_curve
from .phantom import PhantomConfig, PhantomTruth, generate_cohort, generate_phantom
from .pipeline import PipelineConfig, run_pipeline
from .registration import DeformationField, RegistrationParams, register_pair, register_series

__version__ = "0.1.0"

__all__ = [
    "CineSeries", "PixelPoint", "LandmarkTrack", "Roi", "min_max_normalize",
    "PhantomConfig", "PhantomTruth", "generate_phantom", "generate_cohort",
    "DeformationField", "RegistrationParams", "register_pair", "register_series",
    "NccTemplateLocalizer", "PropagationLocalizer", "distance_error",
    "MotionVariant", "MotionCurve", "motion_curve",
    "RpParams", "RestInterval", "RestingPhaseSet", "classify_rp",
    "LabeledTransition", "SweepResult", "ConfusionMatrix", "RpAgreement",
    "threshold_sweep", "variant_sweep", "rp_agreement", "confusion_matrix",
    "PipelineConfig", "run_pipeline", "RestPhaseError",
]
