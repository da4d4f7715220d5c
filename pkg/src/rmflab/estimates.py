"""Shared result records for Monte Carlo estimators.

These dataclasses are produced by every estimating module and consumed by the
persistence layer, so they live in their own dependency-free module.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field


class UnstableEstimateError(RuntimeError):
    """Raised when an estimate fails its reliability gate.

    Importance-sampling estimates carry the effective sample size that
    tripped the gate; tail estimates carry the observed hit count.
    """

    def __init__(self, message: str, *, ess: float | None = None,
                 hits: int | None = None) -> None:
        super().__init__(message)
        self.ess = ess
        self.hits = hits


@dataclass
class MomentEstimate:
    """A Monte Carlo point estimate with its standard error and provenance.

    Parameters
    ----------
    quantity : str
        Identifier of the estimated quantity, e.g. ``"moment"`` or
        ``"walk_barrier"``.
    estimate : float
        Point estimate.
    stderr : float
        Standard error of the estimate (batch-means or binomial).
    trials : int
        Number of Monte Carlo trials behind the estimate.
    config : dict
        Snapshot of the defining parameters (x, q, model, sigma, seed,
        grid settings) so the record is self-describing when persisted.
    """

    quantity: str
    estimate: float
    stderr: float
    trials: int
    config: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not math.isfinite(self.estimate):
            raise ValueError(f"estimate must be finite, got {self.estimate}")
        if self.stderr < 0 or not math.isfinite(self.stderr):
            raise ValueError(f"stderr must be finite and >= 0, got {self.stderr}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")


@dataclass
class TailEstimate:
    """Estimated tail probability P(|S(x)| >= threshold) with reference bands.

    ``upper_ref`` and ``lower_ref`` are the reference envelope values
    min{log lam, sqrt(loglog x)} / lam^2 and 1 / (lam^2 (loglog x)^2);
    acceptance multipliers are applied by the caller, not stored here.
    """

    lam: float
    threshold: float
    probability: float
    stderr: float
    trials: int
    hits: int
    upper_ref: float
    lower_ref: float
    config: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.lam <= 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError(f"probability outside [0, 1]: {self.probability}")
        if self.hits < 0 or self.trials < 1:
            raise ValueError("hits must be >= 0 and trials >= 1")


@dataclass
class RunManifest:
    """Metadata written alongside every experiment output file."""

    experiment: str
    config_hash: str
    seed: int
    timestamp: str
    outputs: tuple[str, ...]
    code_version: str


def config_hash(config: dict) -> str:
    """Deterministic hash of a configuration mapping.

    Semantically identical configs (same keys and values, any insertion
    order) hash identically: keys are sorted and floats round-tripped
    through repr by the JSON encoder.
    """
    payload = json.dumps(config, sort_keys=True, separators=(",", ":"),
                         default=str)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()
