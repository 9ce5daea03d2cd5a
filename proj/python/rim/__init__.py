"""Memory-block latent reasoning: python surface over the C++ core."""

from rim._core import *  # noqa: F401,F403

__version__ = "0.1.0"
