"""
Deblurring networks: encoder/decoder blocks, the multi-patch hierarchy,
stacked variants and the multi-scale baseline.
"""

from src.model.baseline import DmsnModel, dmsn_forward
from src.model.blocks import (
    CodecConfig,
    CodecContainer,
    CodecPair,
    codec_seed,
    decode,
    encode,
    init_params,
    param_bytes,
    param_count,
)
from src.model.factory import ForwardResult, ModelSpec, build_model, model_loss, pad_for_model, run_model, unpad
from src.model.hierarchy import (
    DmphnModel,
    HierarchySpec,
    LevelRecord,
    LevelTrace,
    crop,
    forward,
    loss,
    pad_to_valid,
    parse_pattern,
)
from src.model.stacking import StackModel, VmphnUnit, carry_features, stack_forward, stacked_loss, vmphn_forward

__all__ = [
    "CodecConfig", "CodecContainer", "CodecPair", "codec_seed", "decode", "encode", "init_params",
    "param_bytes", "param_count",
    "DmphnModel", "HierarchySpec", "LevelRecord", "LevelTrace", "crop", "forward", "loss",
    "pad_to_valid", "parse_pattern",
    "StackModel", "VmphnUnit", "carry_features", "stack_forward", "stacked_loss", "vmphn_forward",
    "DmsnModel", "dmsn_forward",
    "ForwardResult", "ModelSpec", "build_model", "model_loss", "pad_for_model", "run_model", "unpad",
]
