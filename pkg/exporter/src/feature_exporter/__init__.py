"""Feature exporter: writes RWTF keypoint/descriptor sequences.

Two backends: a deterministic synthetic scene renderer with ground truth
and association sidecars, and an adapter for a dense-matching network.
"""

__version__ = "0.1.0"

from .formats import (DEFAULT_DEPTH_SCALE, DESCRIPTOR_DIM, write_rwtf,
                      write_tum_trajectory)
from .network import (ExportError, ModelUnavailable, NetworkAdapterConfig,
                      export_from_network)
from .scene import (EmptyScene, Intrinsics, SceneError, SyntheticScene,
                    make_scene, scene_from_config, smooth_path)
from .synthetic import export_synthetic, project_frame

__all__ = [
    "DEFAULT_DEPTH_SCALE", "DESCRIPTOR_DIM", "write_rwtf",
    "write_tum_trajectory", "ExportError", "ModelUnavailable",
    "NetworkAdapterConfig", "export_from_network", "EmptyScene",
    "Intrinsics", "SceneError", "SyntheticScene", "make_scene",
    "scene_from_config", "smooth_path", "export_synthetic", "project_frame",
]
