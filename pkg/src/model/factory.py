"""
Model construction and dispatch by kind.

The command runners, the trainer and the checkpoint code only talk to
models through this module: ``ModelSpec`` describes a model (and is stored in
checkpoints), ``build_model`` creates it, ``run_model`` / ``model_loss`` run
it whatever its kind.
"""

from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple, Union

from src import config
from src.exceptions import ConfigError, PatternError, UsageError
from src.model.baseline import DmsnModel, dmsn_forward
from src.model.blocks import CodecConfig, CodecContainer
from src.model.hierarchy import DmphnModel, crop, forward, loss, pad_to_multiple, parse_pattern
from src.model.stacking import STACK_KINDS, StackModel, stack_forward, stacked_loss
from src.tensor import Tensor

Model = Union[DmphnModel, StackModel, DmsnModel]

DEFAULT_DMSN_SCALES = 3


@dataclass(frozen=True)
class ModelSpec:
    """Everything needed to rebuild a model.

    Attributes:
        kind: One of config.MODEL_KINDS
        pattern: Hierarchy pattern (ignored by dmsn)
        stack: Number of sub-models for stack kinds
        scales: Number of scales for dmsn
        weight_sharing: One CodecPair for the whole model
        top_residual: Add the input image to the output
        codec: Encoder/decoder layout
        seed: Initialization seed
        dtype: "f32" or "f64"
    """

    kind: str = "dmphn"
    pattern: str = config.DEFAULT_PATTERN
    stack: int = 1
    scales: Optional[int] = None
    weight_sharing: bool = False
    top_residual: bool = True
    codec: CodecConfig = field(default_factory=CodecConfig)
    seed: int = config.DEFAULT_SEED
    dtype: str = config.DEFAULT_DTYPE

    def validate(self) -> "ModelSpec":
        """Check option combinations.

        Returns:
            The spec with defaults filled in (dmsn scale count)

        Raises:
            UsageError: On an invalid combination or pattern
        """
        if self.kind not in config.MODEL_KINDS:
            raise UsageError(f"unknown model '{self.kind}', expected one of {', '.join(config.MODEL_KINDS)}")
        if self.stack < 1:
            raise UsageError(f"--stack must be >= 1, got {self.stack}")
        if self.stack != 1 and self.kind not in ("stack-dmphn", "stack-vmphn"):
            raise UsageError(f"--stack requires stack-dmphn or stack-vmphn, not {self.kind}")
        if self.scales is not None and self.kind != "dmsn":
            raise UsageError(f"--scales requires --model dmsn, not {self.kind}")
        if self.kind == "dmsn":
            if self.weight_sharing:
                raise UsageError("--weight-sharing is not available for dmsn")
            scales = DEFAULT_DMSN_SCALES if self.scales is None else self.scales
            if not 1 <= scales <= config.MAX_DMSN_SCALES:
                raise UsageError(f"--scales must be between 1 and {config.MAX_DMSN_SCALES}, got {scales}")
            if self.codec.out_channels == 1 and (scales > 1 or self.top_residual):
                raise UsageError("--out-channels 1 requires a single scale and --no-top-residual")
            return replace(self, scales=scales)
        try:
            hierarchy = parse_pattern(self.pattern)
        except PatternError as exc:
            raise UsageError(str(exc)) from None
        if self.codec.out_channels == 1 and (self.kind != "dmphn" or hierarchy.levels > 1 or self.top_residual):
            raise UsageError("--out-channels 1 requires --model dmphn, pattern 1 and --no-top-residual")
        return self

    @property
    def label(self) -> str:
        ws = "-WS" if self.weight_sharing else ""
        if self.kind == "dmsn":
            return f"DMSN({self.scales})"
        if self.kind == "dmphn":
            return f"DMPHN({self.pattern}){ws}"
        if self.kind == "vmphn":
            return f"VMPHN({self.pattern}){ws}"
        name = "DMPHN" if self.kind == "stack-dmphn" else "VMPHN"
        return f"Stack({self.stack})-{name}({self.pattern}){ws}"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "pattern": self.pattern,
            "stack": self.stack,
            "scales": self.scales,
            "weight_sharing": self.weight_sharing,
            "top_residual": self.top_residual,
            "codec": self.codec.to_dict(),
            "seed": self.seed,
            "dtype": self.dtype,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelSpec":
        values = dict(data)
        values["codec"] = CodecConfig.from_dict(values.get("codec", {}))
        return cls(**values)


def build_model(spec: ModelSpec) -> Model:
    """Create a freshly initialized model from a spec."""
    spec = spec.validate()
    if spec.kind == "dmsn":
        return DmsnModel.create(spec.scales, spec.codec, spec.seed, spec.dtype, spec.top_residual)
    hierarchy = parse_pattern(spec.pattern)
    if spec.kind == "dmphn":
        return DmphnModel.create(hierarchy, spec.codec, spec.seed, spec.dtype,
                                 top_residual=spec.top_residual, weight_sharing=spec.weight_sharing)
    if spec.kind not in STACK_KINDS:
        raise ConfigError(f"unknown model kind '{spec.kind}'")
    return StackModel.create(spec.kind, hierarchy, spec.codec, spec.seed, count=spec.stack, dtype=spec.dtype,
                             top_residual=spec.top_residual, weight_sharing=spec.weight_sharing)


@dataclass
class ForwardResult:
    """Outputs of every sub-model (a single entry for non-stacked models) and the trace."""

    outputs: List[Tensor]
    trace: Any

    @property
    def output(self) -> Tensor:
        return self.outputs[-1]


def run_model(model: Model, b1: Tensor) -> ForwardResult:
    if isinstance(model, StackModel):
        outputs, traces = stack_forward(model, b1)
        return ForwardResult(outputs, traces)
    if isinstance(model, DmsnModel):
        output, trace = dmsn_forward(model, b1)
        return ForwardResult([output], trace)
    output, trace = forward(model, b1)
    return ForwardResult([output], trace)


def model_loss(model: Model, result: ForwardResult, g: Tensor) -> Tensor:
    """Level-1 loss for single models, the summed per-sub-model loss for stacks."""
    if isinstance(model, StackModel):
        return stacked_loss(result.outputs, g)
    return loss(result.output, g)


def size_constraints(model: Model) -> Tuple[Tuple[int, int], Tuple[int, int]]:
    """(multiple, minimum) spatial constraints of the model's input."""
    if isinstance(model, DmsnModel):
        return model.valid_multiple(), model.min_size()
    spec = model.spec
    return spec.valid_multiple(), spec.min_size()


def valid_multiple(model: Model) -> Tuple[int, int]:
    return size_constraints(model)[0]


def pad_for_model(model: Model, x: Tensor):
    """Reflect-pad x to a size the model accepts; returns (padded, crop box)."""
    multiple, minimum = size_constraints(model)
    return pad_to_multiple(x, multiple, minimum)


def unpad(x: Tensor, box) -> Tensor:
    return crop(x, box)


def zero_decoders(model: CodecContainer) -> None:
    model.zero_decoders()


def deblur_image(model: Model, image: Tensor) -> Tuple[List[Tensor], ForwardResult]:
    """Deblur a [0, 1] image of any size.

    Returns:
        The [0, 1] output of every sub-model, cropped back to the input size
        (the last entry is the model output), and the raw forward result on
        the padded, normalized input
    """
    padded, box = pad_for_model(model, Tensor(image.data - 0.5, dtype=image.dtype))
    result = run_model(model, padded)
    return [unpad(Tensor(s.data + 0.5), box) for s in result.outputs], result
