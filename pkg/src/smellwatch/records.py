"""Detection verdict records shared by the static and runtime detectors.

Every record is self-checking: `detected` must equal the comparison of
`metric_value` against `threshold` under the record's comparator, so a
consumer can re-derive the verdict without knowing the rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

SYSTEM_SCOPE = "system"

COMPARATORS = {
    ">=": lambda a, b: a >= b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    "<": lambda a, b: a < b,
    "==": lambda a, b: a == b,
}


def compare(metric_value: float, comparator: str, threshold: float) -> bool:
    return COMPARATORS[comparator](metric_value, threshold)


@dataclass
class DetectionRecord:
    run_id: str
    window: dict  # {"start_us", "length_us"}
    scope: str  # service name or "system"
    smell_id: str
    detected: bool
    metric_value: float
    comparator: str
    threshold: float
    evidence: dict = field(default_factory=dict)
    params_snapshot: dict = field(default_factory=dict)
    created_at_us: int = 0

    def __post_init__(self) -> None:
        if self.comparator not in COMPARATORS:
            raise ValueError(f"unknown comparator {self.comparator!r}")
        expected = compare(self.metric_value, self.comparator, self.threshold)
        if self.detected != expected:
            raise ValueError(
                f"{self.smell_id}@{self.scope}: detected={self.detected} contradicts "
                f"{self.metric_value} {self.comparator} {self.threshold}"
            )

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, raw: dict) -> "DetectionRecord":
        return cls(**raw)


def make_record(smell_id: str, scope: str, metric_value: float, comparator: str,
                threshold: float, evidence: dict, params: dict,
                run_id: str = "", window: dict | None = None,
                created_at_us: int = 0) -> DetectionRecord:
    """Build a record whose verdict follows from the comparison."""
    return DetectionRecord(
        run_id=run_id,
        window=window or {},
        scope=scope,
        smell_id=smell_id,
        detected=compare(metric_value, comparator, threshold),
        metric_value=float(metric_value),
        comparator=comparator,
        threshold=float(threshold),
        evidence=evidence,
        params_snapshot=dict(params),
        created_at_us=created_at_us,
    )


@dataclass
class DetectionRunSummary:
    run_id: str
    window: dict
    executed: bool
    positive: bool
    record_count: int

    def __post_init__(self) -> None:
        if self.positive and self.record_count == 0:
            raise ValueError("positive run must carry at least one record")

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, raw: dict) -> "DetectionRunSummary":
        return cls(**raw)
