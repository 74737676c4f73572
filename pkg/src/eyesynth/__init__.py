"""Synthetic light-distribution eye images with exact labels, plus the classical
pupil/CR analysis, CR selection, calibration and precision tools around them."""
from .render import (GaussianFeature, add_pixel_noise, composite_scene, eval_gaussian,
                     finalize_image, plateau_sigma, render_profile)
from .scenarios import SCENARIOS, apply_stage, get_preset, sample_scene
from .stream import SampleStream, export_dataset, make_stream, next_batch

__version__ = "0.1.0"
