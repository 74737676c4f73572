"""Scenario presets and scene samplers."""
from .distributions import Distribution
from .layouts import (CollaretteSpec, IrisSpec, PlacementError, PolygonLayout, build_collarette,
                      collarette_polygon, spurious_acceptance,
                      house_vertices, place_nonoverlapping_crs, ring_vertices,
                      sample_house_layout, sample_ring_layout, sample_spurious_positions)
from .presets import (PRESETS, SCENARIOS, apply_stage, compile_config, export_presets,
                      get_preset, load_preset, resolve, save_preset, widened_ranges)
from .scenes import (CrLabel, GradientBackground, LayeredEyeBackground, Scene, SplitBackground,
                     UniformBackground, render_clean, render_scene, sample_chugh_scene,
                     sample_cr_scene, sample_eds2020_scene, sample_full_eye_scene,
                     sample_layout_scene, sample_pupil_scene, sample_scene)
