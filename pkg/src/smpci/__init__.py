"""Single-mask X-ray differential phase contrast: forward models, retrieval and a wave-optics check."""

__version__ = "0.1.0"
