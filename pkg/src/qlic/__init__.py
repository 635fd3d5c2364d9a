"""qlic: a desk-scale learned image codec with a diversified-context,
quadtree-scheduled backward-adaptive entropy model and a real rANS
bitstream."""

from .model import CodecConfig, ImageCodec

__version__ = "0.1.0"

__all__ = ["CodecConfig", "ImageCodec", "__version__"]
