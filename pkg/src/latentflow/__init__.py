"""latentflow: conditional flow matching in a variational latent space.

Trains a velocity field that transports score-conditioned prior latents
toward recording-conditioned posterior latents and refines inference-time
samples by adaptive ODE integration, together with the surrounding
singing-synthesis training objective, alignment, and evaluation metrics.
"""
__version__ = "0.1.0"
