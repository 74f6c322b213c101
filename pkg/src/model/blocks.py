"""
Encoder / decoder pair used at every level of the networks.

Encoder F: three stages of (entry convolution, residual blocks). The stage-1
entry keeps the resolution; the stage-2 and stage-3 entries use stride 2, so
the encoder downsamples by 4. A residual block is conv -> ReLU -> conv plus
its input. Under the default configuration the encoder has 15 convolutions,
6 residual links and 6 ReLUs.

Decoder G mirrors the encoder: the two stride-2 entries become stride-2
transposed convolutions (k4, pad 1) and a final convolution maps to the
output channels.

Layer layouts are described once as "programs" (lists of steps) that are
used for initialization, the forward pass and FLOP accounting alike.
"""

from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Iterable, List, Mapping, Tuple, Union

import numpy as np

from src import config
from src.exceptions import ConfigError, ParameterMismatchError, ShapeError
from src.tensor import Tensor, add, conv2d, conv_transpose2d, relu, resolve_dtype

SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class CodecConfig:
    """Channel layout of one encoder/decoder pair.

    Attributes:
        stage_channels: Channels of the three encoder stages
        res_blocks_per_stage: Residual blocks after each stage entry
        kernel_size: Odd kernel size of the regular convolutions
        in_channels: Image channels fed to the encoder
        out_channels: Image channels produced by the decoder
    """

    stage_channels: Tuple[int, int, int] = config.STAGE_CHANNELS
    res_blocks_per_stage: int = config.RES_BLOCKS_PER_STAGE
    kernel_size: int = config.KERNEL_SIZE
    in_channels: int = config.IMAGE_CHANNELS
    out_channels: int = config.IMAGE_CHANNELS

    def __post_init__(self):
        object.__setattr__(self, "stage_channels", tuple(int(c) for c in self.stage_channels))
        if len(self.stage_channels) != 3 or min(self.stage_channels) <= 0:
            raise ConfigError(f"stage_channels must be three positive ints, got {self.stage_channels}")
        if self.res_blocks_per_stage < 0:
            raise ConfigError("res_blocks_per_stage must be >= 0")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError(f"kernel_size must be odd, got {self.kernel_size}")
        if self.out_channels not in (1, 3):
            raise ConfigError(f"out_channels must be 1 or 3, got {self.out_channels}")

    @property
    def base_channels(self) -> int:
        return self.stage_channels[0]

    @property
    def feature_channels(self) -> int:
        return self.stage_channels[2]

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["stage_channels"] = list(self.stage_channels)
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CodecConfig":
        return cls(**{k: (tuple(v) if k == "stage_channels" else v) for k, v in data.items()})


@dataclass(frozen=True)
class LayerSpec:
    """One convolution of a codec program."""

    name: str
    in_channels: int
    out_channels: int
    kernel: int
    stride: int
    pad: int
    transposed: bool = False
    init_gain: float = config.LINEAR_INIT_GAIN

    @property
    def weight_shape(self) -> Tuple[int, int, int, int]:
        if self.transposed:
            return (self.in_channels, self.out_channels, self.kernel, self.kernel)
        return (self.out_channels, self.in_channels, self.kernel, self.kernel)

    @property
    def init_bound(self) -> float:
        """Half-width of the uniform draw: variance init_gain / fan_in."""
        return float(np.sqrt(3.0 * self.init_gain / self.fan_in))

    @property
    def fan_in(self) -> int:
        # a stride-s transposed convolution feeds each output from 1/s^2 of its taps
        taps = self.in_channels * self.kernel * self.kernel
        return taps // (self.stride * self.stride) if self.transposed else taps

    def output_size(self, h: int, w: int) -> Tuple[int, int]:
        if self.transposed:
            return ((h - 1) * self.stride - 2 * self.pad + self.kernel,
                    (w - 1) * self.stride - 2 * self.pad + self.kernel)
        return ((h + 2 * self.pad - self.kernel) // self.stride + 1,
                (w + 2 * self.pad - self.kernel) // self.stride + 1)


@dataclass(frozen=True)
class Step:
    """A plain convolution ("conv") or a residual block ("res") of two convolutions."""

    kind: str
    layers: Tuple[LayerSpec, ...] = field(default_factory=tuple)


def _res_blocks(prefix: str, channels: int, cfg: CodecConfig) -> List[Step]:
    k, p = cfg.kernel_size, cfg.kernel_size // 2
    return [Step("res", (LayerSpec(f"{prefix}.res{r}.conv1", channels, channels, k, 1, p,
                                   init_gain=config.RELU_INIT_GAIN),
                         LayerSpec(f"{prefix}.res{r}.conv2", channels, channels, k, 1, p,
                                   init_gain=config.BRANCH_END_INIT_GAIN)))
            for r in range(1, cfg.res_blocks_per_stage + 1)]


def encoder_program(cfg: CodecConfig) -> List[Step]:
    """Layer program of the encoder F."""
    k, p = cfg.kernel_size, cfg.kernel_size // 2
    steps: List[Step] = []
    previous = cfg.in_channels
    for stage, channels in enumerate(cfg.stage_channels, start=1):
        stride = 1 if stage == 1 else 2
        steps.append(Step("conv", (LayerSpec(f"enc.s{stage}.entry", previous, channels, k, stride, p),)))
        steps.extend(_res_blocks(f"enc.s{stage}", channels, cfg))
        previous = channels
    return steps


def decoder_program(cfg: CodecConfig) -> List[Step]:
    """Layer program of the decoder G."""
    c1, c2, c3 = cfg.stage_channels
    k, p = cfg.kernel_size, cfg.kernel_size // 2
    up = config.UPSAMPLE_KERNEL
    steps: List[Step] = []
    steps.extend(_res_blocks("dec.s3", c3, cfg))
    steps.append(Step("conv", (LayerSpec("dec.up2", c3, c2, up, 2, 1, transposed=True),)))
    steps.extend(_res_blocks("dec.s2", c2, cfg))
    steps.append(Step("conv", (LayerSpec("dec.up1", c2, c1, up, 2, 1, transposed=True),)))
    steps.extend(_res_blocks("dec.s1", c1, cfg))
    steps.append(Step("conv", (LayerSpec("dec.out", c1, cfg.out_channels, k, 1, p,
                                        init_gain=config.BRANCH_END_INIT_GAIN),)))
    return steps


def program_layers(steps: Iterable[Step]) -> List[LayerSpec]:
    return [layer for step in steps for layer in step.layers]


OUTPUT_LAYER = "dec.out"


class CodecPair:
    """Parameters of one encoder F_i and one decoder G_i.

    Attributes:
        config (CodecConfig): Layout of the pair
        encoder (Dict[str, Tensor]): Ordered encoder weights and biases
        decoder (Dict[str, Tensor]): Ordered decoder weights and biases
    """

    def __init__(self, config: CodecConfig, encoder: Dict[str, Tensor], decoder: Dict[str, Tensor]):
        self.config = config
        self.encoder = encoder
        self.decoder = decoder

    @property
    def dtype(self) -> np.dtype:
        return next(iter(self.encoder.values())).dtype

    def named_parameters(self, prefix: str = "") -> List[Tuple[str, Tensor]]:
        lead = f"{prefix}." if prefix else ""
        return [(lead + name, t) for name, t in list(self.encoder.items()) + list(self.decoder.items())]

    def set_parameter(self, name: str, tensor: Tensor) -> None:
        table = self.encoder if name.startswith("enc.") else self.decoder
        if name not in table:
            raise KeyError(name)
        table[name] = tensor

    def zero_output_layer(self) -> None:
        """Zero the decoder's final layer so that G(.) == 0 for any input."""
        for suffix in ("weight", "bias"):
            name = f"{OUTPUT_LAYER}.{suffix}"
            old = self.decoder[name]
            self.decoder[name] = Tensor(np.zeros_like(old.data), requires_grad=old.requires_grad, name=name)


def codec_seed(seed: int, index: int) -> int:
    """Independent 64-bit seed for the codec at position `index` of a model."""
    state = np.random.SeedSequence([seed & SEED_MASK, index]).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def init_params(config: CodecConfig, seed: int, dtype: Union[str, np.dtype, None] = None) -> CodecPair:
    """Fan-in scaled uniform weights and zero biases, reproducible from the seed.

    Convolutions feeding a ReLU get He variance 2/fan_in, linear ones 1/fan_in,
    and the last convolution of each residual branch a small fraction of that.

    Args:
        config: Codec layout
        seed: Any 64-bit value
        dtype: "f32" (default) or "f64"

    Returns:
        Freshly initialized CodecPair
    """
    np_dtype = resolve_dtype(dtype)
    rng = np.random.default_rng(seed & SEED_MASK)

    def build(steps: List[Step]) -> Dict[str, Tensor]:
        table: Dict[str, Tensor] = {}
        for layer in program_layers(steps):
            bound = layer.init_bound
            weight = rng.uniform(-bound, bound, size=layer.weight_shape).astype(np_dtype)
            table[f"{layer.name}.weight"] = Tensor(weight, requires_grad=True, name=f"{layer.name}.weight")
            table[f"{layer.name}.bias"] = Tensor(np.zeros(layer.out_channels, dtype=np_dtype),
                                                 requires_grad=True, name=f"{layer.name}.bias")
        return table

    encoder = build(encoder_program(config))
    decoder = build(decoder_program(config))
    return CodecPair(config, encoder, decoder)


def _apply(table: Mapping[str, Tensor], layer: LayerSpec, x: Tensor) -> Tensor:
    w = table[f"{layer.name}.weight"]
    b = table[f"{layer.name}.bias"]
    if layer.transposed:
        return conv_transpose2d(x, w, b, stride=layer.stride, pad=layer.pad)
    return conv2d(x, w, b, stride=layer.stride, pad=layer.pad)


def run_program(table: Mapping[str, Tensor], steps: Iterable[Step], x: Tensor) -> Tensor:
    h = x
    for step in steps:
        if step.kind == "res":
            first, second = step.layers
            h = add(h, _apply(table, second, relu(_apply(table, first, h))))
        else:
            h = _apply(table, step.layers[0], h)
    return h


def encode(pair: CodecPair, x: Tensor) -> Tensor:
    """C = F(x): (N, in_channels, h, w) -> (N, stage-3 channels, h/4, w/4)."""
    if x.ndim != 4:
        raise ShapeError(f"encode expects NCHW input, got shape {x.shape}")
    _, c, h, w = x.shape
    if c != pair.config.in_channels:
        raise ShapeError(f"encode expects {pair.config.in_channels} channels, got {c}")
    if h % config.DOWNSAMPLING or w % config.DOWNSAMPLING:
        raise ShapeError(f"encode needs spatial dims divisible by {config.DOWNSAMPLING}, got {h}x{w}")
    if h < config.MIN_PATCH_SIZE or w < config.MIN_PATCH_SIZE:
        raise ShapeError(f"encode needs spatial dims >= {config.MIN_PATCH_SIZE}, got {h}x{w}")
    return run_program(pair.encoder, encoder_program(pair.config), x)


def decode(pair: CodecPair, c: Tensor) -> Tensor:
    """S = G(C): (N, stage-3 channels, h/4, w/4) -> (N, out_channels, h, w)."""
    if c.ndim != 4:
        raise ShapeError(f"decode expects NCHW input, got shape {c.shape}")
    if c.shape[1] != pair.config.feature_channels:
        raise ShapeError(f"decode expects {pair.config.feature_channels} channels, got {c.shape[1]}")
    return run_program(pair.decoder, decoder_program(pair.config), c)


class CodecContainer:
    """Mixin for models made of CodecPairs.

    Subclasses implement ``named_codecs``; a pair that appears several times
    (weight sharing) is listed once under its first name.
    """

    def named_codecs(self) -> List[Tuple[str, CodecPair]]:
        raise NotImplementedError

    def unique_codecs(self) -> List[Tuple[str, CodecPair]]:
        seen = set()
        unique = []
        for prefix, pair in self.named_codecs():
            if id(pair) not in seen:
                seen.add(id(pair))
                unique.append((prefix, pair))
        return unique

    def named_parameters(self) -> List[Tuple[str, Tensor]]:
        named: List[Tuple[str, Tensor]] = []
        for prefix, pair in self.unique_codecs():
            named.extend(pair.named_parameters(prefix))
        return named

    def parameters(self) -> List[Tensor]:
        return [t for _, t in self.named_parameters()]

    def load_parameters(self, values: Mapping[str, Union[Tensor, np.ndarray]], strict: bool = True) -> None:
        """Replace parameters by name.

        Raises:
            ParameterMismatchError: On a missing name, a shape difference, or
                (strict) a name the model does not have
        """
        expected = dict(self.named_parameters())
        for name, current in expected.items():
            if name not in values:
                raise ParameterMismatchError(f"parameter '{name}' is missing")
            value = values[name]
            shape = tuple(value.shape)
            if shape != current.shape:
                raise ParameterMismatchError(
                    f"parameter '{name}' has shape {shape}, model expects {current.shape}")
        if strict:
            extra = [name for name in values if name not in expected]
            if extra:
                raise ParameterMismatchError(f"parameter '{extra[0]}' does not exist in this model")
        for prefix, pair in self.unique_codecs():
            for full_name, current in pair.named_parameters(prefix):
                value = values[full_name]
                data = value.data if isinstance(value, Tensor) else np.asarray(value)
                local = full_name[len(prefix) + 1:]
                pair.set_parameter(local, Tensor(data.astype(current.dtype, copy=False),
                                                 requires_grad=current.requires_grad, name=local))

    def zero_decoders(self) -> None:
        """Zero the final decoder layer of every pair (the model becomes a pure residual map)."""
        for _, pair in self.unique_codecs():
            pair.zero_output_layer()


ParamSource = Union[CodecPair, CodecContainer, Mapping[str, Tensor], Iterable[Tensor]]


def _unique_tensors(params: ParamSource) -> List[Tensor]:
    if isinstance(params, (CodecPair, CodecContainer)):
        tensors = [t for _, t in params.named_parameters()]
    elif isinstance(params, Mapping):
        tensors = list(params.values())
    else:
        tensors = list(params)
    seen = set()
    unique = []
    for t in tensors:
        if id(t) not in seen:
            seen.add(id(t))
            unique.append(t)
    return unique


def param_count(params: ParamSource) -> int:
    """Exact number of weight and bias values (shared tensors counted once)."""
    return sum(t.size for t in _unique_tensors(params))


def param_bytes(params: ParamSource) -> int:
    """Storage of all parameter values; count x 4 for f32 models."""
    return sum(t.size * t.dtype.itemsize for t in _unique_tensors(params))


def encoder_parameters(pair: CodecPair) -> List[Tensor]:
    return list(pair.encoder.values())


def decoder_parameters(pair: CodecPair) -> List[Tensor]:
    return list(pair.decoder.values())
