"""Numerical laboratory for the Prandtl boundary-layer perturbation system.

Evolves the perturbation of a diffusive shear flow on a periodized
half-space with an IMEX pseudospectral scheme, tracks the analyticity
radius through dyadic Besov norms and phase conjugation, and provides a
sweep harness for lifespan-scaling experiments.
"""

from .kernels import BACKEND as kernel_backend

__version__ = "0.1.0"

__all__ = ["kernel_backend", "__version__"]
