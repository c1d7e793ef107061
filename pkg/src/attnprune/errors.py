"""Exception hierarchy with stable error codes.

Every error carries a ``code`` string that is kept stable across releases;
the CLI prints it as ``error[<code>]: <message>`` and foreign-language
bridges translate it back into typed errors.
"""

from __future__ import annotations


class PruneToolError(Exception):
    """Base class for all toolkit errors."""

    code = "error"


class ValidationError(PruneToolError, ValueError):
    """Invalid input data or parameters (CLI exit code 2)."""

    code = "validation"


class NonFiniteEntryError(ValidationError):
    code = "non_finite"

    def __init__(self, position: tuple[int, int]):
        self.position = position
        super().__init__(f"non-finite attention entry at {position}")


class NegativeEntryError(ValidationError):
    code = "negative_entry"

    def __init__(self, position: tuple[int, int]):
        self.position = position
        super().__init__(f"negative attention entry at {position}")


class RowSumError(ValidationError):
    code = "row_sum_out_of_tolerance"

    def __init__(self, row: int, total: float):
        self.row = row
        self.total = total
        super().__init__(f"row {row} sums to {total!r}, expected 1 within tolerance")


class EmptyStackError(ValidationError):
    code = "empty_stack"


class DimensionMismatchError(ValidationError):
    code = "dimension_mismatch"


class LengthMismatchError(ValidationError):
    code = "length_mismatch"


class EmptyInputError(ValidationError):
    code = "empty_input"


class NegativeScoreError(ValidationError):
    """Power mapper needs non-negative key scores (zero terms are defined as 0)."""

    code = "negative_score"


class AllZeroScoresError(ValidationError):
    """Mapper output vanished everywhere; the L1 normalizer is undefined."""

    code = "all_zero_scores"


class RatioOutOfRangeError(ValidationError):
    code = "ratio_out_of_range"

    def __init__(self, ratio: float):
        self.ratio = ratio
        super().__init__(f"pruning ratio {ratio!r} outside [0, 1)")


class GridTooSmallError(ValidationError):
    code = "grid_too_small"


class OddDimensionsError(ValidationError):
    code = "odd_dimensions"


class TauOutOfRangeError(ValidationError):
    code = "tau_out_of_range"


class UnknownBlockError(ValidationError):
    code = "unknown_block"

    def __init__(self, block_id: str):
        self.block_id = block_id
        super().__init__(f"unknown attention block id {block_id!r}")


class EmptySequenceError(ValidationError):
    code = "empty_sequence"


class ResolutionIncompatibleError(ValidationError):
    code = "resolution_incompatible"


class TopologyError(ValidationError):
    code = "topology_invalid"


class ConfigError(ValidationError):
    code = "config_invalid"


class InfeasibleBudgetError(PruneToolError):
    """Budget solver cannot reach the target (CLI exit code 3)."""

    code = "infeasible_budget"


class TargetAboveFullCostError(InfeasibleBudgetError):
    code = "target_above_full_cost"


class TargetBelowFloorError(InfeasibleBudgetError):
    code = "target_below_floor"
