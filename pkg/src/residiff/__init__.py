"""residiff: residual diffusivity of noisy expanding torus maps."""

__version__ = "0.1.0"
