"""Desk-scale GAN inversion lab built around an instance-aware padding space.

A style-based generator whose convolution paddings and constant input are
replaceable per image, an encoder that jointly predicts W+ style codes and
padding coefficients, the training objectives, and an editing toolkit
(blending, dual-space interpolation, one-pair customized directions).
"""

from .config import (
    DatasetSpec,
    EncoderConfig,
    ExperimentConfig,
    GeneratorConfig,
    LossWeights,
    TrainConfig,
)
from .encoder import Encoder, InversionOutput, padding_from
from .editing import EditDirection, InversionResult
from .generator import Generator, broadcast_to_wplus
from .geometry import (
    CoefficientMap,
    PaddingSet,
    apply_ring_padding,
    assemble_padding_set,
    extract_ring,
    layer_table,
    native_padding,
    replaced_layer_indices,
    ring_size,
)

__all__ = [
    "CoefficientMap",
    "DatasetSpec",
    "EditDirection",
    "Encoder",
    "EncoderConfig",
    "ExperimentConfig",
    "Generator",
    "GeneratorConfig",
    "InversionOutput",
    "InversionResult",
    "LossWeights",
    "PaddingSet",
    "TrainConfig",
    "apply_ring_padding",
    "assemble_padding_set",
    "broadcast_to_wplus",
    "extract_ring",
    "layer_table",
    "native_padding",
    "padding_from",
    "replaced_layer_indices",
    "ring_size",
]

__version__ = "0.1.0"
