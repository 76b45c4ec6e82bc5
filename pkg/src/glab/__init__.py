"""Disordered discrete Gaussian free field on boxes of Z^d: exact spectral
sampling, Green functions, disorder models and the statistics of maxima,
deviations and hard-wall events."""

__version__ = "0.1.0"

from .errors import GlabError
from .lattice import BoxGeometry, ScalarField, make_box
from .spectral import SpectralPlan, make_plan

__all__ = ["BoxGeometry", "GlabError", "ScalarField", "SpectralPlan", "make_box", "make_plan", "__version__"]
