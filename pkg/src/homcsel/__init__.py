"""Band selection for hyperspectral small-target detection with higher-order
multivariate cumulant tensors."""

__version__ = "0.1.0"
