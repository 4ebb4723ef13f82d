"""Stylize photos with exemplar color and tone looks chosen by image content."""

from .colorspace import LabImage, lab_to_srgb, preprocess, srgb_to_lab
from .imgio import RgbImage, decode_image, encode_image
from .selection import SelectionConfig, select_styles
from .similarity import SimilarityParams, frechet, hellinger, style_similarity
from .stylestats import StyleDescriptor, style_descriptor
from .transfer import TransferConfig, transfer_style

__version__ = "0.1.0"

__all__ = [
    "LabImage",
    "RgbImage",
    "SelectionConfig",
    "SimilarityParams",
    "StyleDescriptor",
    "TransferConfig",
    "decode_image",
    "encode_image",
    "frechet",
    "hellinger",
    "lab_to_srgb",
    "preprocess",
    "select_styles",
    "srgb_to_lab",
    "style_descriptor",
    "style_similarity",
    "transfer_style",
]
