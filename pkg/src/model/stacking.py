"""
Horizontally stacked models: Stack-DMPHN, the v-shaped VMPHN unit and Stack-VMPHN.

Sub-models run in sequence. Sub-model m takes the output image of sub-model
m-1 as its input and, through ``carry_features``, the intermediate maps of
m-1: at every level the receiving unit adds the sender's residual image to
its patch inputs and the sender's concatenated features to its
post-encoder features, the same additive wiring used between two levels of
one unit.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

from src.exceptions import ConfigError, ShapeError
from src.model.blocks import CodecConfig, CodecContainer, CodecPair, codec_seed, decode, encode, init_params
from src.model.hierarchy import (
    DmphnModel,
    HierarchySpec,
    Injection,
    LevelRecord,
    LevelTrace,
    check_output_channels,
    forward,
)
from src.tensor import Tensor, add, mse_half, split_grid

logger = logging.getLogger(__name__)

STACK_KINDS = ("stack-dmphn", "vmphn", "stack-vmphn")


def carry_features(trace: LevelTrace) -> Injection:
    """Maps a finished unit hands to the next one.

    Level i (0-based index) of the receiver gets the sender's residual
    images and concatenated features produced by level i+1, which share the
    footprint of the level-i patches.
    """
    records = trace.records
    return {index: (records[index + 1].residuals, records[index + 1].concat)
            for index in range(len(records) - 1)}


def merge_injections(*injections: Optional[Injection]) -> Injection:
    """Sum several injections level by level and patch by patch."""
    merged: Injection = {}
    for injection in injections:
        if not injection:
            continue
        for index, (images, features) in injection.items():
            if index not in merged:
                merged[index] = (list(images), list(features))
                continue
            old_images, old_features = merged[index]
            merged[index] = ([add(a, b) for a, b in zip(old_images, images)],
                             [add(a, b) for a, b in zip(old_features, features)])
    return merged


class VmphnUnit(CodecContainer):
    """Top-bottom-top unit: a downward arm (level 1 to L) then an upward DMPHN pass.

    The arms do not share weights unless weight_sharing is set, in which case
    both arms and all levels use one pair.
    """

    def __init__(self, spec: HierarchySpec, down: List[CodecPair], up: DmphnModel,
                 weight_sharing: bool = False):
        expected = 1 if weight_sharing else spec.levels
        if len(down) != expected:
            raise ConfigError(f"downward arm of pattern {spec.text} needs {expected} codec pairs, got {len(down)}")
        if up.spec != spec:
            raise ConfigError(f"arms disagree on pattern: {spec.text} vs {up.spec.text}")
        self.spec = spec
        self.down = list(down)
        self.up = up
        self.weight_sharing = weight_sharing

    @classmethod
    def create(cls, spec: HierarchySpec, codec_config: CodecConfig, seed: int, dtype=None,
               top_residual: bool = True, weight_sharing: bool = False, seed_offset: int = 0) -> "VmphnUnit":
        check_output_channels(codec_config, spec.levels + 1, top_residual)
        if weight_sharing:
            shared = init_params(codec_config, codec_seed(seed, seed_offset), dtype)
            up = DmphnModel(spec, [shared], top_residual=top_residual, weight_sharing=True)
            return cls(spec, [shared], up, weight_sharing=True)
        levels = spec.levels
        up = DmphnModel.create(spec, codec_config, seed, dtype, top_residual=top_residual, seed_offset=seed_offset)
        down = [init_params(codec_config, codec_seed(seed, seed_offset + levels + i), dtype) for i in range(levels)]
        return cls(spec, down, up)

    @property
    def top_residual(self) -> bool:
        return self.up.top_residual

    def down_codec(self, index: int) -> CodecPair:
        return self.down[0] if self.weight_sharing else self.down[index]

    def named_codecs(self) -> List[Tuple[str, CodecPair]]:
        down = [(f"down.level{i + 1}", self.down_codec(i)) for i in range(self.spec.levels)]
        up = [(f"up.{name}", pair) for name, pair in self.up.named_codecs()]
        return down + up


@dataclass
class VmphnTrace:
    """Downward-arm records (level 1 first) and the upward pass trace."""

    down: List[LevelRecord]
    up: LevelTrace

    @property
    def output(self) -> Tensor:
        return self.up.output

    @property
    def records(self) -> List[LevelRecord]:
        return self.up.records


def _split_to_children(spec: HierarchySpec, index: int, maps: Sequence[Tensor]) -> List[Tensor]:
    """Cut parent-footprint maps of level index-1 into level-index patch order."""
    fr, fc = spec.split_factors(index)
    pieces: List[Optional[Tensor]] = [None] * spec.counts[index]
    for parent, value in enumerate(maps):
        for child, piece in zip(spec.children(index, parent), split_grid(value, fr, fc)):
            pieces[child] = piece
    return pieces  # type: ignore[return-value]


def down_pass(unit: VmphnUnit, b1: Tensor) -> List[LevelRecord]:
    """Levels 1 to L, each patch decoded at its own footprint.

    Level i adds the split residual image and the split features of level
    i-1 to its patch inputs and post-encoder features.
    """
    spec = unit.spec
    records: List[LevelRecord] = []
    for index in range(spec.levels):
        pair = unit.down_codec(index)
        record = LevelRecord(level=index + 1, grid=spec.grids[index])
        record.patches = split_grid(b1, *spec.grids[index])
        if index == 0:
            record.features = [encode(pair, x) for x in record.patches]
        else:
            above = records[-1]
            images = _split_to_children(spec, index, above.residuals)
            features = _split_to_children(spec, index, above.features)
            encoded = [encode(pair, add(p, s)) for p, s in zip(record.patches, images)]
            record.features = [add(c, f) for c, f in zip(encoded, features)]
        record.residuals = [decode(pair, c) for c in record.features]
        records.append(record)
    return records


def vmphn_forward(unit: VmphnUnit, b1: Tensor, inject: Optional[Injection] = None) -> Tuple[Tensor, VmphnTrace]:
    """Downward arm then upward arm; the downward maps of level i feed level i of the upward arm."""
    if b1.ndim != 4:
        raise ShapeError(f"vmphn_forward expects NCHW input, got shape {b1.shape}")
    unit.spec.check_input(b1.shape[2], b1.shape[3])
    down = down_pass(unit, b1)
    from_down: Injection = {index: (record.residuals, record.features) for index, record in enumerate(down)}
    output, up_trace = forward(unit.up, b1, merge_injections(from_down, inject))
    return output, VmphnTrace(down=down, up=up_trace)


Unit = Union[DmphnModel, VmphnUnit]
UnitTrace = Union[LevelTrace, VmphnTrace]


class StackModel(CodecContainer):
    """Sub-models M_1..M_N run one after the other.

    Attributes:
        kind (str): "stack-dmphn", "vmphn" or "stack-vmphn"
        units (List[Unit]): Sub-models, all with the same pattern
    """

    def __init__(self, kind: str, units: List[Unit]):
        if kind not in STACK_KINDS:
            raise ConfigError(f"unknown stack kind '{kind}'")
        if not units:
            raise ConfigError("a stack needs at least one sub-model")
        if kind == "vmphn" and len(units) != 1:
            raise ConfigError("vmphn is a single unit; use stack-vmphn for several")
        unit_type = DmphnModel if kind == "stack-dmphn" else VmphnUnit
        for unit in units:
            if not isinstance(unit, unit_type):
                raise ConfigError(f"{kind} expects {unit_type.__name__} sub-models")
            if unit.spec != units[0].spec:
                raise ConfigError(f"sub-model patterns differ: {units[0].spec.text} vs {unit.spec.text}")
        self.kind = kind
        self.units = list(units)

    @classmethod
    def create(cls, kind: str, spec: HierarchySpec, codec_config: CodecConfig, seed: int, count: int = 1,
               dtype=None, top_residual: bool = True, weight_sharing: bool = False) -> "StackModel":
        if count < 1:
            raise ConfigError(f"stack size must be >= 1, got {count}")
        if kind == "stack-dmphn":
            if weight_sharing:
                shared = init_params(codec_config, codec_seed(seed, 0), dtype)
                units: List[Unit] = [DmphnModel(spec, [shared], top_residual, weight_sharing=True)
                                     for _ in range(count)]
            else:
                units = [DmphnModel.create(spec, codec_config, seed, dtype, top_residual,
                                           seed_offset=m * spec.levels) for m in range(count)]
        else:
            if weight_sharing:
                first = VmphnUnit.create(spec, codec_config, seed, dtype, top_residual, weight_sharing=True)
                units = [first] + [VmphnUnit(spec, first.down, first.up, weight_sharing=True)
                                   for _ in range(count - 1)]
            else:
                units = [VmphnUnit.create(spec, codec_config, seed, dtype, top_residual,
                                          seed_offset=m * 2 * spec.levels) for m in range(count)]
        return cls(kind, units)

    @property
    def spec(self) -> HierarchySpec:
        return self.units[0].spec

    @property
    def size(self) -> int:
        return len(self.units)

    def named_codecs(self) -> List[Tuple[str, CodecPair]]:
        return [(f"unit{m + 1}.{name}", pair)
                for m, unit in enumerate(self.units) for name, pair in unit.named_codecs()]


def _up_trace(trace: UnitTrace) -> LevelTrace:
    return trace.up if isinstance(trace, VmphnTrace) else trace


def stack_forward(model: StackModel, b1: Tensor) -> Tuple[List[Tensor], List[UnitTrace]]:
    """Run every sub-model; returns all outputs S_1..S_N (last is the result) and their traces."""
    outputs: List[Tensor] = []
    traces: List[UnitTrace] = []
    image = b1
    carried: Optional[Injection] = None
    for unit in model.units:
        if isinstance(unit, VmphnUnit):
            image, trace = vmphn_forward(unit, image, carried)
        else:
            image, trace = forward(unit, image, carried)
        outputs.append(image)
        traces.append(trace)
        carried = carry_features(_up_trace(trace))
    logger.debug("stack of %d %s units finished", len(model.units), model.kind)
    return outputs, traces


def stacked_loss(outputs: Sequence[Tensor], g: Tensor) -> Tensor:
    """0.5 * sum over sub-models of mean((S_i - g)^2)."""
    if not outputs:
        raise ShapeError("stacked_loss needs at least one output")
    total = mse_half(outputs[0], g)
    for s in outputs[1:]:
        total = add(total, mse_half(s, g))
    return total
