"""Three-dimensional optoacoustic tomography toolkit."""
__version__ = "0.1.0"
