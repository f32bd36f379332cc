"""Real-world x4 super-resolution with adaptive degradation, a triangular/rectangular
window transformer generator, a semantic U-Net discriminator and a wavelet loss."""

from .degradation import DegradationConfig, DegradationLevelSpec, PipelineDraw, RoundSpec, degrade
from .estimators import AdaptiveDegrader, SuperResolver
from .imageops import psnr, resize, resize_to, rgb_to_ycbcr, unsharp_mask, ycbcr_to_rgb
from .nets import CFATGenerator, DiscriminatorConfig, GeneratorConfig, SemanticUNetDiscriminator
from .validation import ConfigError
from .wavelet import WaveletLossConfig, swt2, wavelet_loss

__version__ = "0.1.0"

__all__ = [
    "AdaptiveDegrader",
    "SuperResolver",
    "CFATGenerator",
    "SemanticUNetDiscriminator",
    "GeneratorConfig",
    "DiscriminatorConfig",
    "DegradationConfig",
    "DegradationLevelSpec",
    "RoundSpec",
    "PipelineDraw",
    "WaveletLossConfig",
    "ConfigError",
    "degrade",
    "psnr",
    "resize",
    "resize_to",
    "rgb_to_ycbcr",
    "ycbcr_to_rgb",
    "unsharp_mask",
    "swt2",
    "wavelet_loss",
]
