"""Spatial Fay-Herriot small area estimation with functional covariates."""
__version__ = "0.1.0"
