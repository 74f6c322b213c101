"""
Analytic FLOP counts, derived from the same layer programs the codecs run.

A multiply-accumulate counts as 2 FLOPs; bias additions, ReLUs and residual
or cross-level additions count 1 FLOP per output element.
"""

from dataclasses import dataclass
from typing import List, Tuple

from src.model.baseline import DmsnModel
from src.model.blocks import CodecConfig, Step, decoder_program, encoder_program
from src.model.hierarchy import DmphnModel, HierarchySpec
from src.model.stacking import StackModel, VmphnUnit


@dataclass
class LevelCost:
    """FLOPs spent at one level (or scale) of a model for one input image."""

    name: str
    patches: int
    patch_size: Tuple[int, int]
    flops: int


def _program_flops(steps: List[Step], h: int, w: int) -> Tuple[int, int, int]:
    total = 0
    for step in steps:
        for layer in step.layers:
            ho, wo = layer.output_size(h, w)
            macs = layer.in_channels * layer.out_channels * layer.kernel * layer.kernel
            macs *= (h * w) if layer.transposed else (ho * wo)
            total += 2 * macs + layer.out_channels * ho * wo
            if step.kind == "res" and layer is step.layers[0]:
                total += layer.out_channels * ho * wo  # relu
            h, w = ho, wo
        if step.kind == "res":
            total += step.layers[-1].out_channels * h * w  # skip addition
    return total, h, w


def encode_flops(cfg: CodecConfig, h: int, w: int) -> int:
    return _program_flops(encoder_program(cfg), h, w)[0]


def decode_flops(cfg: CodecConfig, h: int, w: int) -> int:
    """FLOPs of decoding features whose image footprint is h x w."""
    return _program_flops(decoder_program(cfg), h // 4, w // 4)[0]


def _feature_elems(cfg: CodecConfig, h: int, w: int) -> int:
    return cfg.feature_channels * (h // 4) * (w // 4)


def dmphn_costs(model: DmphnModel, h: int, w: int, prefix: str = "", injected: bool = False) -> List[LevelCost]:
    """Per-level costs of one upward pass; `injected` adds the cost of incoming maps at every level."""
    spec: HierarchySpec = model.spec
    cfg = model.codec(0).config
    costs = []
    for index in range(spec.levels):
        rows, cols = spec.grids[index]
        ph, pw = h // rows, w // cols
        count = spec.counts[index]
        flops = count * encode_flops(cfg, ph, pw)
        if index == 0:
            flops += decode_flops(cfg, h, w)
            if model.top_residual:
                flops += cfg.out_channels * h * w
        else:
            prows, pcols = spec.grids[index - 1]
            flops += spec.counts[index - 1] * decode_flops(cfg, h // prows, w // pcols)
        adds = (index < spec.levels - 1) + injected
        flops += adds * count * (cfg.in_channels * ph * pw + _feature_elems(cfg, ph, pw))
        costs.append(LevelCost(f"{prefix}level{index + 1}", count, (ph, pw), flops))
    return costs


def vmphn_costs(unit: VmphnUnit, h: int, w: int, prefix: str = "", injected: bool = False) -> List[LevelCost]:
    spec = unit.spec
    cfg = unit.down_codec(0).config
    costs = []
    for index in range(spec.levels):
        rows, cols = spec.grids[index]
        ph, pw = h // rows, w // cols
        count = spec.counts[index]
        flops = count * (encode_flops(cfg, ph, pw) + decode_flops(cfg, ph, pw))
        if index > 0:
            flops += count * (cfg.in_channels * ph * pw + _feature_elems(cfg, ph, pw))
        costs.append(LevelCost(f"{prefix}down.level{index + 1}", count, (ph, pw), flops))
    # the upward arm always receives the downward maps
    costs.extend(dmphn_costs(unit.up, h, w, prefix=f"{prefix}up.", injected=True))
    if injected:
        for cost in costs[spec.levels:]:
            ph, pw = cost.patch_size
            cost.flops += cost.patches * (cfg.in_channels * ph * pw + _feature_elems(cfg, ph, pw))
    return costs


def dmsn_costs(model: DmsnModel, h: int, w: int) -> List[LevelCost]:
    cfg = model.codecs[0].config
    costs = []
    for k in range(model.num_scales):
        sh, sw = h >> k, w >> k
        flops = encode_flops(cfg, sh, sw) + decode_flops(cfg, sh, sw)
        if k > 0:
            flops += 4 * cfg.in_channels * sh * sw  # 2x2 average into this scale
        if k < model.num_scales - 1:
            # upsampled image and features: 4 taps per output element, plus the addition
            flops += 8 * (cfg.in_channels * sh * sw + _feature_elems(cfg, sh, sw))
        if k == 0 and model.top_residual:
            flops += cfg.out_channels * h * w
        costs.append(LevelCost(f"scale{k + 1}", 1, (sh, sw), flops))
    return costs


def level_costs(model, h: int, w: int) -> List[LevelCost]:
    """Per-level FLOPs for one h x w image."""
    if isinstance(model, DmsnModel):
        return dmsn_costs(model, h, w)
    if isinstance(model, StackModel):
        costs: List[LevelCost] = []
        for m, unit in enumerate(model.units):
            prefix = f"unit{m + 1}."
            if isinstance(unit, VmphnUnit):
                costs.extend(vmphn_costs(unit, h, w, prefix, injected=m > 0))
            else:
                costs.extend(dmphn_costs(unit, h, w, prefix, injected=m > 0))
        return costs
    return dmphn_costs(model, h, w)


def model_flops(model, h: int, w: int) -> int:
    return sum(cost.flops for cost in level_costs(model, h, w))
