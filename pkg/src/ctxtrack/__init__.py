"""Multi-sensor multi-target tracking with state-dependent observability.

Detection probability and clutter intensity are supplied per scan by a
:class:`~ctxtrack.context.DetectorContext` and queried by the trackers while
hypotheses are formed, rather than being fixed tracker constants.
"""

from .core import (
    Detection,
    GaussianComponent,
    GroundTruthTrack,
    SensorScan,
    StateEstimate,
    Track,
    gaussian_density,
    mahalanobis_distance,
)

__all__ = [
    "Detection",
    "GaussianComponent",
    "GroundTruthTrack",
    "SensorScan",
    "StateEstimate",
    "Track",
    "gaussian_density",
    "mahalanobis_distance",
]

__version__ = "0.1.0"
