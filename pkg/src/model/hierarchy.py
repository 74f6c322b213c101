"""
Deep multi-patch hierarchical network.

Level 1 sees the whole image; level i sees the image cut into a grid of
patches. Processing starts at the finest (bottom) level: each level encodes
its patches (plus the residual image coming from the level below), adds the
concatenated features of the level below, and its decoder produces a residual
image for every patch of the next coarser level. Level 1 decodes the final
residual, which is added to the input image when ``top_residual`` is set.
"""

import logging
import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src import config
from src.exceptions import ConfigError, PatternError, ShapeError
from src.model.blocks import CodecConfig, CodecContainer, CodecPair, codec_seed, decode, encode, init_params
from src.tensor import Tensor, add, concat_grid, mse_half, split_grid

logger = logging.getLogger(__name__)

Grid = Tuple[int, int]
# level index -> (images added to the patch inputs, features added after the encoder)
Injection = Dict[int, Tuple[Sequence[Tensor], Sequence[Tensor]]]

_PATTERN_RE = re.compile(r"^\s*\d+(\s*-\s*\d+)*\s*$")


@dataclass(frozen=True)
class HierarchySpec:
    """Parsed hierarchy pattern.

    Attributes:
        counts: Patches per level, level 1 first
        grids: (rows, cols) of every level
    """

    counts: Tuple[int, ...]
    grids: Tuple[Grid, ...]

    @property
    def levels(self) -> int:
        return len(self.counts)

    @property
    def ratios(self) -> Tuple[int, ...]:
        return tuple(self.counts[i] // self.counts[i - 1] for i in range(1, self.levels))

    @property
    def finest_grid(self) -> Grid:
        return self.grids[-1]

    @property
    def text(self) -> str:
        return "-".join(str(c) for c in self.counts)

    def split_factors(self, index: int) -> Grid:
        """(rows, cols) of children per parent between level index-1 and level index (0-based)."""
        rows, cols = self.grids[index]
        prows, pcols = self.grids[index - 1]
        return rows // prows, cols // pcols

    def valid_multiple(self) -> Grid:
        rows, cols = self.finest_grid
        return rows * config.DOWNSAMPLING, cols * config.DOWNSAMPLING

    def min_size(self) -> Grid:
        rows, cols = self.finest_grid
        return rows * config.MIN_PATCH_SIZE, cols * config.MIN_PATCH_SIZE

    def check_input(self, h: int, w: int) -> None:
        mh, mw = self.valid_multiple()
        nh, nw = self.min_size()
        if h % mh or w % mw:
            raise ShapeError(f"pattern {self.text} needs input dims divisible by {mh}x{mw}, got {h}x{w}")
        if h < nh or w < nw:
            raise ShapeError(f"pattern {self.text} needs input dims of at least {nh}x{nw}, got {h}x{w}")

    def children(self, index: int, parent: int) -> List[int]:
        """Row-major patch indices at level `index` whose parent is patch `parent` of level index-1."""
        fr, fc = self.split_factors(index)
        _, pcols = self.grids[index - 1]
        _, cols = self.grids[index]
        pr, pc = divmod(parent, pcols)
        return [(pr * fr + a) * cols + (pc * fc + b) for a in range(fr) for b in range(fc)]

    def __str__(self) -> str:
        return f"({self.text})"


def grid_schedule(counts: Sequence[int]) -> List[Grid]:
    """Patch grids for a list of counts.

    Ratio-2 splits alternate between height and width, starting with
    ``config.FIRST_SPLIT_AXIS``; ratio 4 splits both axes; ratio 1 keeps the grid.
    """
    grids: List[Grid] = [(1, 1)]
    split_height = config.FIRST_SPLIT_AXIS == "height"
    for i in range(1, len(counts)):
        rows, cols = grids[-1]
        ratio = counts[i] // counts[i - 1]
        if ratio == 2:
            grids.append((rows * 2, cols) if split_height else (rows, cols * 2))
            split_height = not split_height
        elif ratio == 4:
            grids.append((rows * 2, cols * 2))
        else:
            grids.append((rows, cols))
    return grids


def parse_pattern(text: str) -> HierarchySpec:
    """Parse a pattern such as "1-2-4-8".

    Raises:
        PatternError: On malformed text, a first count other than 1, or a
            ratio between consecutive levels outside {1, 2, 4}
    """
    if not isinstance(text, str) or not _PATTERN_RE.match(text):
        raise PatternError(f"malformed pattern '{text}', expected dash-separated integers such as 1-2-4")
    counts = [int(part) for part in text.split("-")]
    if counts[0] != 1:
        raise PatternError(f"pattern '{text}' must start with 1")
    for prev, cur in zip(counts, counts[1:]):
        if cur % prev or cur // prev not in config.ALLOWED_RATIOS:
            raise PatternError(f"pattern '{text}': ratio must be 1, 2, or 4 (got {prev} -> {cur})")
    return HierarchySpec(tuple(counts), tuple(grid_schedule(counts)))


@dataclass
class LevelRecord:
    """Intermediate maps of one level (lists are in row-major patch order).

    ``concat`` and ``residuals`` are indexed by the patches of the next coarser
    level; at level 1 ``residuals`` holds the single decoder output S_1.
    """

    level: int
    grid: Grid
    patches: List[Tensor] = field(default_factory=list)
    features: List[Tensor] = field(default_factory=list)
    concat: List[Tensor] = field(default_factory=list)
    residuals: List[Tensor] = field(default_factory=list)


@dataclass
class LevelTrace:
    """Full trace of one forward pass; ``records[0]`` is level 1."""

    records: List[LevelRecord]
    output: Tensor

    def level(self, i: int) -> LevelRecord:
        return self.records[i - 1]

    def residual_images(self) -> List[Tensor]:
        """S_i of every level tiled back to full-image size, level 1 first."""
        images = []
        for index, record in enumerate(self.records):
            if index == 0:
                images.append(record.residuals[0])
            else:
                images.append(concat_grid(record.residuals, *self.records[index - 1].grid))
        return images


class DmphnModel(CodecContainer):
    """One encoder/decoder pair per level, or a single shared pair.

    Attributes:
        spec (HierarchySpec): Pattern and grids
        codecs (List[CodecPair]): Pairs, level 1 first (one entry when weight_sharing)
        top_residual (bool): Add the input image to the level-1 output
        weight_sharing (bool): All levels use codecs[0]
    """

    def __init__(self, spec: HierarchySpec, codecs: List[CodecPair], top_residual: bool = True,
                 weight_sharing: bool = False):
        expected = 1 if weight_sharing else spec.levels
        if len(codecs) != expected:
            raise ConfigError(f"pattern {spec.text} needs {expected} codec pairs, got {len(codecs)}")
        check_output_channels(codecs[0].config, spec.levels, top_residual)
        self.spec = spec
        self.codecs = list(codecs)
        self.top_residual = top_residual
        self.weight_sharing = weight_sharing

    @classmethod
    def create(cls, spec: HierarchySpec, codec_config: CodecConfig, seed: int, dtype=None,
               top_residual: bool = True, weight_sharing: bool = False, seed_offset: int = 0) -> "DmphnModel":
        count = 1 if weight_sharing else spec.levels
        codecs = [init_params(codec_config, codec_seed(seed, seed_offset + i), dtype) for i in range(count)]
        return cls(spec, codecs, top_residual=top_residual, weight_sharing=weight_sharing)

    def codec(self, index: int) -> CodecPair:
        return self.codecs[0] if self.weight_sharing else self.codecs[index]

    def named_codecs(self) -> List[Tuple[str, CodecPair]]:
        return [(f"level{i + 1}", self.codec(i)) for i in range(self.spec.levels)]


def check_output_channels(codec_config: CodecConfig, levels: int, top_residual: bool) -> None:
    """A one-channel residual can only be the final output of a single level without input residual."""
    if codec_config.out_channels == 1 and (levels > 1 or top_residual):
        raise ConfigError("out_channels=1 requires a single-level model with top_residual disabled")


def _with_injection(values: List[Tensor], injected: Optional[Sequence[Tensor]]) -> List[Tensor]:
    if injected is None:
        return values
    if len(injected) != len(values):
        raise ShapeError(f"injection has {len(injected)} patches, level has {len(values)}")
    return [add(v, extra) for v, extra in zip(values, injected)]


def forward(model: DmphnModel, b1: Tensor, inject: Optional[Injection] = None) -> Tuple[Tensor, LevelTrace]:
    """Bottom-to-top pass over all levels.

    Args:
        model: Network to run
        b1: Blurry input (N, 3, H, W), dims valid for the model's pattern
        inject: Optional per-level maps added to the patch inputs and to the
            post-encoder features (used to chain sub-models)

    Returns:
        (s1, trace): deblurred image and every intermediate map
    """
    spec = model.spec
    if b1.ndim != 4:
        raise ShapeError(f"forward expects NCHW input, got shape {b1.shape}")
    spec.check_input(b1.shape[2], b1.shape[3])
    inject = inject or {}

    records: List[Optional[LevelRecord]] = [None] * spec.levels
    below_residuals: List[Tensor] = []
    below_concat: List[Tensor] = []
    output = b1
    for index in reversed(range(spec.levels)):
        pair = model.codec(index)
        record = LevelRecord(level=index + 1, grid=spec.grids[index])
        record.patches = split_grid(b1, *spec.grids[index])
        images, features = inject.get(index, (None, None))

        inputs = record.patches
        if below_residuals:
            inputs = [add(p, s) for p, s in zip(inputs, below_residuals)]
        inputs = _with_injection(inputs, images)
        encoded = [encode(pair, x) for x in inputs]
        if below_concat:
            encoded = [add(c, star) for c, star in zip(encoded, below_concat)]
        record.features = _with_injection(encoded, features)

        if index == 0:
            residual = decode(pair, record.features[0])
            record.residuals = [residual]
            output = add(residual, b1) if model.top_residual else residual
        else:
            fr, fc = spec.split_factors(index)
            parents = spec.counts[index - 1]
            record.concat = [concat_grid([record.features[k] for k in spec.children(index, p)], fr, fc)
                             for p in range(parents)]
            record.residuals = [decode(pair, star) for star in record.concat]
        below_residuals, below_concat = record.residuals, record.concat
        records[index] = record

    return output, LevelTrace(records=list(records), output=output)


def loss(s1: Tensor, g: Tensor) -> Tensor:
    """Level-1 training loss 0.5 * mean((s1 - g)^2)."""
    return mse_half(s1, g)


CropBox = Tuple[int, int]


def valid_size(h: int, w: int, multiple: Grid, minimum: Grid) -> Grid:
    """Smallest (H', W') >= (h, w) that is a multiple of `multiple` and at least `minimum`."""
    mh, mw = multiple
    th = max(-(-h // mh) * mh, minimum[0])
    tw = max(-(-w // mw) * mw, minimum[1])
    return th, tw


def pad_to_valid(x: Tensor, spec: HierarchySpec) -> Tuple[Tensor, CropBox]:
    """Reflect-pad the bottom/right edges up to the smallest size the pattern accepts."""
    return pad_to_multiple(x, spec.valid_multiple(), spec.min_size())


def pad_to_multiple(x: Tensor, multiple: Grid, minimum: Grid) -> Tuple[Tensor, CropBox]:
    h, w = x.shape[2], x.shape[3]
    th, tw = valid_size(h, w, multiple, minimum)
    if (th, tw) == (h, w):
        return x, (h, w)
    padded = np.pad(x.data, ((0, 0), (0, 0), (0, th - h), (0, tw - w)), mode="reflect")
    logger.debug("padded %dx%d input to %dx%d", h, w, th, tw)
    return Tensor(padded), (h, w)


def crop(x: Tensor, box: CropBox) -> Tensor:
    """Undo pad_to_valid."""
    h, w = box
    if x.shape[2] == h and x.shape[3] == w:
        return x
    return Tensor(np.ascontiguousarray(x.data[:, :, :h, :w]))
