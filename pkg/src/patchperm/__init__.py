"""Single-style-image GAN style transfer with patch permutation and LBP scoring."""

__version__ = "0.1.0"
