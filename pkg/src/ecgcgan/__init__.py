"""Conditional GAN for synthesizing and detecting adversarial ECG beats."""

__version__ = "0.1.0"
