"""Hierarchical superlocalized bases and compressed solution operators for rough-coefficient diffusion."""

__version__ = "0.1.0"
