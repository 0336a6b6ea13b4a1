"""Multi-domain univariate time-series diffusion with prototype domain prompts."""

__version__ = "0.1.0"
