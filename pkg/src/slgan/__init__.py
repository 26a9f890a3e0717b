"""Style- and latent-guided GAN for facial makeup transfer and removal."""

__version__ = "0.1.0"
