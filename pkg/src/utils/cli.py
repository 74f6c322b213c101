"""
Helpers shared by the command runners: common flags, option resolution,
logging setup, thread pinning and the exit-code policy.
"""

import argparse
import contextlib
import logging
import sys
from typing import Any, Callable, Dict, Optional

from threadpoolctl import threadpool_limits

from src import config
from src.exceptions import ConfigError, DeblurError, UsageError
from src.model.blocks import CodecConfig
from src.model.factory import ModelSpec

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

logger = logging.getLogger(__name__)


def configure_logging(verbose: bool = False) -> None:
    """Root logger on stderr; DEBUG with --verbose, INFO otherwise."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=str, help="JSON file with option defaults (flags take precedence)")
    parser.add_argument("--threads", type=int, help="Kernel thread count (pinned with threadpoolctl)")
    parser.add_argument("--verbose", action="store_true", help="Debug logging")


def add_model_arguments(parser: argparse.ArgumentParser) -> None:
    """Flags describing a model. Defaults are None so the config file and profile can fill them."""
    group = parser.add_argument_group("model")
    group.add_argument("--model", choices=config.MODEL_KINDS, help="Model kind (default: dmphn)")
    group.add_argument("--pattern", type=str, help=f"Hierarchy pattern (default: {config.DEFAULT_PATTERN})")
    group.add_argument("--stack", type=int, help="Number of stacked sub-models (stack-dmphn, stack-vmphn)")
    group.add_argument("--scales", type=int, help="Number of scales (dmsn, default 3)")
    group.add_argument("--weight-sharing", action="store_true", default=None,
                       help="Use one encoder/decoder pair for the whole model")
    group.add_argument("--top-residual", action=argparse.BooleanOptionalAction, default=None,
                       help="Add the input image to the output (default: on)")
    group.add_argument("--out-channels", type=int, choices=(1, 3), help="Decoder output channels (default: 3)")
    group.add_argument("--channels", type=str, help="Encoder stage channels C1,C2,C3 (default from profile)")
    group.add_argument("--seed", type=int, help=f"Seed (default: {config.DEFAULT_SEED})")
    group.add_argument("--dtype", choices=("f32", "f64"), help="Parameter dtype (default: f32)")
    group.add_argument("--profile", choices=sorted(config.PROFILES),
                       help="Training profile: desk (reduced channels, runs on a CPU) or paper, alias full "
                            "(full channels, batch 6, crop 256, lr 1e-4, 3000 epochs; not desk-runnable). "
                            "Default: desk for training, paper for inspect and bench")


def load_file_config(args: argparse.Namespace) -> Dict[str, Any]:
    try:
        return config.load_config_file(getattr(args, "config", None))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def profile_of(args: argparse.Namespace, file_config: Dict[str, Any],
               default: str = config.DEFAULT_PROFILE) -> Dict[str, Any]:
    name = config.resolve_option("profile", getattr(args, "profile", None), file_config, None, default)
    if name not in config.PROFILES:
        raise UsageError(f"unknown profile '{name}'")
    return config.PROFILES[name]


def option(args: argparse.Namespace, name: str, file_config: Dict[str, Any],
           profile: Optional[Dict[str, Any]] = None, default: Any = None) -> Any:
    """Resolve one option: flag > config file > profile > default."""
    return config.resolve_option(name, getattr(args, name, None), file_config, profile, default)


def _channels(value: Any):
    if isinstance(value, str):
        return config.parse_channels(value)
    return tuple(int(v) for v in value)


def model_spec_from_args(args: argparse.Namespace, file_config: Dict[str, Any],
                         default_profile: str = config.DEFAULT_PROFILE) -> ModelSpec:
    """Build and validate a ModelSpec from flags, config file and profile.

    inspect and bench default to the "paper" profile so they report the full
    architecture; training defaults to "desk".

    Raises:
        UsageError: On any invalid value or combination
    """
    profile = profile_of(args, file_config, default_profile)
    try:
        channels = _channels(option(args, "channels", file_config, profile, config.STAGE_CHANNELS))
        codec = CodecConfig(stage_channels=channels,
                            out_channels=int(option(args, "out_channels", file_config, None,
                                                    config.IMAGE_CHANNELS)))
        spec = ModelSpec(
            kind=option(args, "model", file_config, None, "dmphn"),
            pattern=str(option(args, "pattern", file_config, None, config.DEFAULT_PATTERN)),
            stack=int(option(args, "stack", file_config, None, 1)),
            scales=option(args, "scales", file_config),
            weight_sharing=bool(option(args, "weight_sharing", file_config, None, False)),
            top_residual=bool(option(args, "top_residual", file_config, None, True)),
            codec=codec,
            seed=int(option(args, "seed", file_config, None, config.DEFAULT_SEED)),
            dtype=option(args, "dtype", file_config, None, config.DEFAULT_DTYPE),
        )
    except (ConfigError, ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None
    return spec.validate()


def parse_size_option(text: str):
    try:
        return config.parse_size(text)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


@contextlib.contextmanager
def thread_limit(threads: Optional[int]):
    if threads is None:
        yield
        return
    if threads < 1:
        raise UsageError(f"--threads must be >= 1, got {threads}")
    with threadpool_limits(limits=threads):
        yield


def execute(command: Callable[[argparse.Namespace], int], args: argparse.Namespace,
            parser: argparse.ArgumentParser) -> int:
    """Run a command and map failures to exit codes (2 usage, 1 runtime)."""
    try:
        with thread_limit(getattr(args, "threads", None)):
            return command(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DeblurError, OSError) as exc:
        logger.debug("command failed", exc_info=True)
        print(f"❌ {exc}", file=sys.stderr)
        return EXIT_FAILURE
