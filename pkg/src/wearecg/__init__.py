"""Reconstruction of 12-lead ECGs from reduced lead sets with a convolutional VAE."""
__version__ = "0.1.0"
