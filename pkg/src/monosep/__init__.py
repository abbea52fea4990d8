"""Monaural speech separation at desk scale.

A dependency-light implementation of a convolution-augmented gated
single-head transformer separator: convolutional encoder/decoder, masking
network built from gated attention blocks with joint local (chunked,
squared-ReLU) and global (linearized) self-attention, SI-SDR training, and
a minimal reverse-mode autodiff core on numpy.
"""

__version__ = "0.1.0"
