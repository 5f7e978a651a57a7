"""Learned selection of LFNST-style secondary transforms for a neural-network
intra prediction mode, inside a small quadtree image codec."""

from .codec import RDConfig, decode_image, encode_image
from .predictor import ModelSet
from .signaling import SignalingScheme
from .transforms import TransformBank

__all__ = ["RDConfig", "encode_image", "decode_image", "ModelSet", "SignalingScheme", "TransformBank"]
