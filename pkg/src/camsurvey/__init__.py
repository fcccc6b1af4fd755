"""Estimate how many surveillance cameras are visible from a city's streets.

The pipeline samples points on a road network, fetches street-level imagery
at those points, runs camera detections through human verification, corrects
for detector recall and per-image road coverage, and turns verified detection
counts into city-wide camera counts and densities with standard errors.
"""

__version__ = "0.1.0"

from .config import PipelineConfig

__all__ = ["PipelineConfig", "__version__"]
