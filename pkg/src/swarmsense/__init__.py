"""Physical-layer models and coordination protocols for underwater robot swarms."""
from .core import Bearing, Seed, Vec3
from .errors import SwarmSenseError

__version__ = "0.1.0"

__all__ = ["Bearing", "Seed", "SwarmSenseError", "Vec3", "__version__"]
