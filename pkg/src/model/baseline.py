"""
Multi-scale baseline (DMSN) built from the same encoder/decoder pair.

The input is downsampled by 2 per coarser scale. Scales run coarse to fine:
the coarser scale's residual image and features are upsampled by 2 and added
to the finer scale's input and post-encoder features. With one scale the
model is the single-level multi-patch network.
"""

from dataclasses import dataclass, field
from typing import List, Tuple

from src import config
from src.exceptions import ConfigError, ShapeError
from src.model.blocks import CodecConfig, CodecContainer, CodecPair, codec_seed, decode, encode, init_params
from src.model.hierarchy import check_output_channels
from src.tensor import Tensor, add, resize_bilinear


class DmsnModel(CodecContainer):
    """One CodecPair per scale, ``codecs[0]`` at full resolution."""

    def __init__(self, codecs: List[CodecPair], top_residual: bool = True):
        if not 1 <= len(codecs) <= config.MAX_DMSN_SCALES:
            raise ConfigError(f"DMSN supports 1 to {config.MAX_DMSN_SCALES} scales, got {len(codecs)}")
        check_output_channels(codecs[0].config, len(codecs), top_residual)
        self.codecs = list(codecs)
        self.top_residual = top_residual

    @classmethod
    def create(cls, num_scales: int, codec_config: CodecConfig, seed: int, dtype=None,
               top_residual: bool = True) -> "DmsnModel":
        if not 1 <= num_scales <= config.MAX_DMSN_SCALES:
            raise ConfigError(f"DMSN supports 1 to {config.MAX_DMSN_SCALES} scales, got {num_scales}")
        codecs = [init_params(codec_config, codec_seed(seed, k), dtype) for k in range(num_scales)]
        return cls(codecs, top_residual=top_residual)

    @property
    def num_scales(self) -> int:
        return len(self.codecs)

    def valid_multiple(self) -> Tuple[int, int]:
        m = config.DOWNSAMPLING * 2 ** (self.num_scales - 1)
        return m, m

    def min_size(self) -> Tuple[int, int]:
        m = config.MIN_PATCH_SIZE * 2 ** (self.num_scales - 1)
        return m, m

    def named_codecs(self) -> List[Tuple[str, CodecPair]]:
        return [(f"scale{k + 1}", pair) for k, pair in enumerate(self.codecs)]


@dataclass
class DmsnTrace:
    """Per-scale maps, finest scale first."""

    inputs: List[Tensor] = field(default_factory=list)
    features: List[Tensor] = field(default_factory=list)
    residuals: List[Tensor] = field(default_factory=list)
    output: Tensor = None


def dmsn_forward(model: DmsnModel, b1: Tensor) -> Tuple[Tensor, DmsnTrace]:
    """Coarse-to-fine pass; returns the finest-scale output and the per-scale trace."""
    if b1.ndim != 4:
        raise ShapeError(f"dmsn_forward expects NCHW input, got shape {b1.shape}")
    h, w = b1.shape[2], b1.shape[3]
    mh, mw = model.valid_multiple()
    nh, nw = model.min_size()
    if h % mh or w % mw or h < nh or w < nw:
        raise ShapeError(f"DMSN with {model.num_scales} scales needs dims divisible by {mh} "
                         f"and at least {nh}x{nw}, got {h}x{w}")

    pyramid = [b1]
    for _ in range(1, model.num_scales):
        pyramid.append(resize_bilinear(pyramid[-1], 0.5))

    trace = DmsnTrace(inputs=[None] * model.num_scales, features=[None] * model.num_scales,
                      residuals=[None] * model.num_scales)
    coarse_image = coarse_features = None
    for k in reversed(range(model.num_scales)):
        pair = model.codecs[k]
        x = pyramid[k]
        if coarse_image is not None:
            x = add(x, resize_bilinear(coarse_image, 2))
        c = encode(pair, x)
        if coarse_features is not None:
            c = add(c, resize_bilinear(coarse_features, 2))
        s = decode(pair, c)
        trace.inputs[k], trace.features[k], trace.residuals[k] = x, c, s
        coarse_image, coarse_features = s, c

    output = add(coarse_image, b1) if model.top_residual else coarse_image
    trace.output = output
    return output, trace
