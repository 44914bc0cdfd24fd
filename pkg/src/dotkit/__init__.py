"""Analysis toolkit for localized quantum-dot single-photon sources."""

from . import (
    device_metrics,
    farfield,
    fitting,
    imaging,
    localization,
    photon_stats,
)
from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = [
    "device_metrics",
    "farfield",
    "fitting",
    "imaging",
    "localization",
    "photon_stats",
    "KERNEL_BACKEND",
    "__version__",
]
