"""Minimizing movements and the reverse approximation of gradient flows.

Modules by topic:

``energy``     energies, point clouds and moduli of continuity
``flow``       curves, the reference solver and curve metrics
``mm``         proximal steps and branching discrete solutions
``penalize``   distance-penalized energies and their parameter rules
``reparam``    time changes, minimality defects and minimalization
``onedim``     singular decompositions, smoothing, rectification and lifts
``cantor``     a flow whose velocity vanishes on a Cantor set
``cli``        the ``gradflow`` command
"""

__version__ = "0.1.0"

from .energy import EnergyField, PointCloud, catalog_names, get_energy
from .errors import GradflowError
from .flow import Curve, integrate_flow, metric_dinf, metric_dT
from .mm import ProxConfig, prox_step, run_mm
from .penalize import make_penalized, select_lambda, select_tau_bar
from .reparam import construct_time_change, minimality_defect, minimalize

__all__ = [
    "__version__", "EnergyField", "PointCloud", "catalog_names", "get_energy", "GradflowError",
    "Curve", "integrate_flow", "metric_dT", "metric_dinf", "ProxConfig", "prox_step", "run_mm",
    "make_penalized", "select_lambda", "select_tau_bar", "construct_time_change",
    "minimality_defect", "minimalize",
]
