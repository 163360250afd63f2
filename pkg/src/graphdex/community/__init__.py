"""Community detection on graph layers."""

from .leiden import (
    CONVERGENCE_TOL,
    Partition,
    detect_communities,
    kernel_backend,
    quality,
)

__all__ = [
    "CONVERGENCE_TOL",
    "Partition",
    "detect_communities",
    "kernel_backend",
    "quality",
]
