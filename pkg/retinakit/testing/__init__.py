"""
Testing utilities for retinakit.

This package provides synthetic fundus phantoms with exact ground truth, so the
pipeline can be exercised without clinical image data.
"""

from retinakit.testing.phantom import Phantom, PhantomSpec, generate_phantom, write_phantom_set

__all__ = [
    "Phantom",
    "PhantomSpec",
    "generate_phantom",
    "write_phantom_set",
]
