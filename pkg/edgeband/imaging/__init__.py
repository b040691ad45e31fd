"""Observation grids, synthetic scenes and image ingestion."""
from .image_model import (  # noqa: F401
    ImageGrid,
    JumpCurve,
    SceneSpec,
    SeparationReport,
    generate,
    simulation_scene,
    multi_edge_scene,
    noise_moment_check,
)
from .loader import load_image, save_csv, save_pgm  # noqa: F401
