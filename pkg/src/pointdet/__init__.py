"""Point-cloud detection toolkit: instance-aware downsampling, centroid
perception, box regression, and a reproducible benchmark CLI."""

__version__ = "0.1.0"
