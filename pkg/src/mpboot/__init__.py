"""Motor-skill learning bootstrapped from kinematic motion plans, in a planar desk world."""

__version__ = "0.1.0"
