"""Self-supervised nighttime monocular depth estimation with adversarial priors.

This package provides differentiable camera geometry, the self-supervised and
adversarial losses, a spatiotemporal sequence discriminator, a synthetic
day/night scene renderer with ground truth, depth metrics, the two-stage
trainer and a CLI tying them together.
"""

__all__ = ["__version__"]
__version__ = "0.1.0"
