"""platoon-shield: synthesis and assessment of CACC platoon designs under
stealthy sensor false-data injection."""

__version__ = "0.1.0"

from .lti import Ellipsoid, HalfSpace  # noqa: F401
from .model import (DiscretePlant, NoiseBounds, VehicleParams,  # noqa: F401
                    build_plant)
