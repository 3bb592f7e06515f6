from typing import Dict, List, Optional, Union

from pydantic import BaseModel, Field

SCHEMA_VERSION = 1

Scalar = Union[bool, int, float, str, None]


class ScenarioSpec(BaseModel):
    name: str
    parameters: Dict[str, float] = Field(default_factory=dict)
    seed: int = Field(default=20240601, ge=0, lt=2**64)


class Table(BaseModel):
    name: str = Field(description="File stem of the CSV emission, unique per report")
    columns: List[str]
    rows: List[List[Scalar]]


class Expectation(BaseModel):
    name: str
    observed: float
    expected: float
    tolerance: float
    basis: str = Field(description="Where the expected value comes from")
    passed: bool = False

    def model_post_init(self, __context) -> None:
        self.passed = abs(self.observed - self.expected) <= self.tolerance


class PolicyResult(BaseModel):
    policy: str
    values: Dict[str, Scalar] = Field(default_factory=dict)


class RunReport(BaseModel):
    schema_version: int = SCHEMA_VERSION
    scenario: ScenarioSpec
    results: List[PolicyResult] = Field(default_factory=list)
    tables: List[Table] = Field(default_factory=list)
    expectations: List[Expectation] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.expectations)

    def table(self, name: str) -> Optional[Table]:
        for t in self.tables:
            if t.name == name:
                return t
        return None

    def result(self, policy: str) -> Optional[PolicyResult]:
        for r in self.results:
            if r.policy == policy:
                return r
        return None
