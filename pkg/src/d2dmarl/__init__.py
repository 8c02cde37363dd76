"""Multi-agent actor-critic RB allocation for D2D underlay cells."""

__version__ = "0.1.0"
