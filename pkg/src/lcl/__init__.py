"""Label-similarity curriculum learning toolkit."""

from . import curriculum, data, experiments, model, similarity

__all__ = ["curriculum", "data", "experiments", "model", "similarity"]
__version__ = "0.1.0"
