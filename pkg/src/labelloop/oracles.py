"""Label sources for the annotation loop: ground-truth replay in simulation,
a human through the annotation service in deployment."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Protocol


class OracleAbort(RuntimeError):
    """Raised when the oracle cannot complete the cycle; no pool mutation has
    happened yet, so the cycle is retryable."""


@dataclass
class AnnotationRequest:
    """Everything the oracle (or its UI) may want to see about a candidate."""

    sample_id: int
    cycle: int
    probs: list[float]
    predicted_class: int
    unified_rank: float
    features: list[float] | None = None
    has_image: bool = False
    aus_variance: float | None = None
    aus_perturbed_class: int | None = None
    bus_entropy: float | None = None
    bus_density: float | None = None
    bus_weighted: float | None = None
    neighbor_points: list[list[float]] | None = None


class Oracle(Protocol):
    def annotate(self, requests: list[AnnotationRequest]) -> Mapping[int, int]:
        """Return a class label for every requested sample id."""
        ...


class SimulatedOracle:
    """Replays ground-truth labels."""

    def __init__(self, truth: Mapping[int, int]):
        self._truth = dict(truth)

    def annotate(self, requests: list[AnnotationRequest]) -> dict[int, int]:
        missing = [r.sample_id for r in requests if r.sample_id not in self._truth]
        if missing:
            raise OracleAbort(f"no ground truth for ids {missing[:5]}")
        return {r.sample_id: self._truth[r.sample_id] for r in requests}
