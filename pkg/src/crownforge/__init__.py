"""Dental crown geometry toolkit.

Margin extraction from labeled intraoral scans, spectral Poisson surface
reconstruction, watertight-crown trimming, penalized Chamfer losses with
analytic gradients, toy attention blocks, evaluation metrics, and a
synthetic scene generator that gives every stage analytic ground truth.
"""

__version__ = "0.1.0"

from .config import RunConfig, load_config
from .errors import CrownForgeError
from .losses import LossConfig, LossResult, chamfer_l2, cmpl, cpl, mpl
from .margin import MarginCurve, extract_margin, fit_closed_bspline
from .mesh import TriMesh, TopologyReport, boundary_loops, topology_report
from .metrics import CrownMetrics, PiaReport, crown_metrics, pia
from .pointops import LabeledPointCloud, farthest_point_sample, nearest_neighbor
from .postprocess import CutSurface, postprocess_crown, signed_height
from .recon import ScalarGrid, VectorGrid, reconstruct
from .synth import SceneBundle, SceneSpec, make_scene, make_template

__all__ = [
    "__version__",
    "CrownForgeError", "RunConfig", "load_config",
    "TriMesh", "TopologyReport", "boundary_loops", "topology_report",
    "LabeledPointCloud", "farthest_point_sample", "nearest_neighbor",
    "MarginCurve", "extract_margin", "fit_closed_bspline",
    "ScalarGrid", "VectorGrid", "reconstruct",
    "CutSurface", "postprocess_crown", "signed_height",
    "LossConfig", "LossResult", "chamfer_l2", "cmpl", "cpl", "mpl",
    "CrownMetrics", "PiaReport", "crown_metrics", "pia",
    "SceneBundle", "SceneSpec", "make_scene", "make_template",
]
