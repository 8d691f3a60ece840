"""Model sources: inline weights or a remote inference endpoint."""

from __future__ import annotations

from dataclasses import dataclass

from ..core import FixedPointConfig, DEFAULT_CONFIG, ModelSpec, Weights


@dataclass(frozen=True)
class InlineWeights:
    spec: ModelSpec
    weights: Weights
    cfg: FixedPointConfig = DEFAULT_CONFIG

    def __post_init__(self):
        self.weights.validate(self.spec)


@dataclass(frozen=True)
class RemoteEndpoint:
    """An inference API the model owner hosts; weights never leave them."""

    url: str
    credential: str
    num_classes: int


def check_mode_compatibility(source, mode: str) -> None:
    from .errors import RefusalError

    if isinstance(source, RemoteEndpoint) and mode != "model_api":
        raise RefusalError(f"a remote endpoint model cannot run in {mode} mode")
