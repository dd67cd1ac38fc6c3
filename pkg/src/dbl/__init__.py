"""Generative, discriminative and hybrid higher-order classifiers for categorical data."""

__version__ = "0.1.0"
