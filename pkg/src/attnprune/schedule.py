"""Per-denoising-step pruning schedules.

Early denoising steps lay out the image and their attention maps are too
uniform to tell unimportant tokens apart, so the first ``tau`` steps run a
prune-less configuration that exempts a picked attention block per
down/up stage (mid-stage excluded by default). ``recommend_tau`` derives
``tau`` from a per-step attention-variance trace.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

from .errors import (
    ConfigError,
    EmptySequenceError,
    TauOutOfRangeError,
    UnknownBlockError,
    ValidationError,
)


class Pick(enum.Enum):
    FIRST = "first"
    MIDDLE = "middle"
    LAST = "last"
    NONE = "none"


@dataclass(frozen=True)
class SkipPolicy:
    """Which attention block per stage is exempt during prune-less steps."""

    down_pick: Pick = Pick.FIRST
    up_pick: Pick = Pick.LAST
    include_mid: bool = False

    def __post_init__(self):
        if self.down_pick is Pick.MIDDLE:
            raise ValidationError("down-stage pick must be first, last, or none")

    @classmethod
    def from_code(cls, code: str, include_mid: bool = False) -> "SkipPolicy":
        """Parse two-letter codes like ``FL`` (down pick, then up pick)."""
        letters = {"F": Pick.FIRST, "M": Pick.MIDDLE, "L": Pick.LAST, "N": Pick.NONE}
        code = code.strip().upper().replace("-", "")
        if len(code) != 2 or code[0] not in "FLN" or code[1] not in letters:
            raise ConfigError(f"unknown policy code {code!r}")
        return cls(letters[code[0]], letters[code[1]], include_mid)

    @property
    def code(self) -> str:
        return self.down_pick.value[0].upper() + self.up_pick.value[0].upper()


@dataclass(frozen=True)
class StepConfig:
    exempt: frozenset[str]
    ratio: float


@dataclass(frozen=True)
class StepSchedule:
    total_steps: int
    tau: int
    policy: SkipPolicy
    per_step: tuple[StepConfig, ...] = field(default=())
    inverted: bool = False

    def __post_init__(self):
        if len(self.per_step) != self.total_steps:
            raise ValidationError("schedule needs one config per step")
        if not 0 <= self.tau <= self.total_steps:
            raise TauOutOfRangeError(
                f"tau {self.tau} outside [0, {self.total_steps}]"
            )

    def to_json(self) -> str:
        return json.dumps(
            {
                "total_steps": self.total_steps,
                "tau": self.tau,
                "policy": self.policy.code,
                "include_mid": self.policy.include_mid,
                "inverted": self.inverted,
                "steps": [
                    {"step": i, "exempt": sorted(c.exempt), "ratio": c.ratio}
                    for i, c in enumerate(self.per_step)
                ],
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "StepSchedule":
        doc = json.loads(text)
        steps = tuple(
            StepConfig(frozenset(s["exempt"]), float(s["ratio"]))
            for s in sorted(doc["steps"], key=lambda s: s["step"])
        )
        return cls(
            int(doc["total_steps"]),
            int(doc["tau"]),
            SkipPolicy.from_code(doc["policy"], bool(doc.get("include_mid", False))),
            steps,
            bool(doc.get("inverted", False)),
        )


def _pick_index(pick: Pick, count: int) -> int | None:
    if pick is Pick.NONE or count == 0:
        return None
    if pick is Pick.FIRST:
        return 0
    if pick is Pick.LAST:
        return count - 1
    return (count - 1) // 2


def resolve_policy(policy: SkipPolicy, topology) -> frozenset[str]:
    """Turn a pick policy into concrete attention-block ids for a topology."""
    exempt: set[str] = set()
    for stage in topology.stages:
        if stage.attention_blocks == 0:
            continue
        if stage.kind == "mid":
            if policy.include_mid:
                exempt.update(
                    f"{stage.id}.attn{i}" for i in range(stage.attention_blocks)
                )
            continue
        pick = policy.down_pick if stage.kind == "down" else policy.up_pick
        idx = _pick_index(pick, stage.attention_blocks)
        if idx is not None:
            exempt.add(f"{stage.id}.attn{idx}")
    return frozenset(exempt)


def build_schedule(
    total_steps: int,
    tau: int,
    policy: SkipPolicy,
    topology,
    ratio: float,
    *,
    invert: bool = False,
    always_exempt: tuple[str, ...] = (),
) -> StepSchedule:
    """Materialize per-step exempt sets: steps [0, tau) prune-less, rest full.

    ``invert`` flips the pattern (exempt sets on the late steps instead),
    which models the prune-more-early ablation. ``always_exempt`` adds a
    permanent exemption (e.g. an entire feature level) on every step.
    """
    if not 0 <= tau <= total_steps:
        raise TauOutOfRangeError(f"tau {tau} outside [0, {total_steps}]")
    known = frozenset(topology.attention_block_ids())
    for block_id in always_exempt:
        if block_id not in known:
            raise UnknownBlockError(block_id)
    skip = resolve_policy(policy, topology)
    base = frozenset(always_exempt)
    per_step = []
    for step in range(total_steps):
        less = step >= tau if invert else step < tau
        per_step.append(StepConfig(base | skip if less else base, ratio))
    return StepSchedule(total_steps, tau, policy, tuple(per_step), invert)


def recommend_tau(variances, threshold: float) -> int:
    """Smallest index from which the variance trace stays at/above threshold.

    Returns the sequence length when the trace never settles above it
    (every step stays prune-less in that case).
    """
    trace = list(variances)
    if not trace:
        raise EmptySequenceError("variance trace is empty")
    if threshold <= 0:
        raise ValidationError("threshold must be > 0")
    tau = len(trace)
    for i in range(len(trace) - 1, -1, -1):
        if trace[i] < threshold:
            return tau
        tau = i
    return tau
