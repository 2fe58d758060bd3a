"""Budget-aware configurator for depthwise-separable segmentation networks."""

__version__ = "0.1.0"
