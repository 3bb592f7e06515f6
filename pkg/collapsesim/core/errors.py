from typing import Optional


class CollapseSimError(ValueError):
    pass


class EmptyState(CollapseSimError):
    pass


class SubsystemClash(CollapseSimError):
    pass


class ZeroNorm(CollapseSimError):
    pass


class ModeMissing(CollapseSimError):
    pass


class BadPartition(CollapseSimError):
    pass


class ImpossibleOutcome(CollapseSimError):
    pass


class BadWeights(CollapseSimError):
    pass


class ZeroIntensity(CollapseSimError):
    pass


class UnsupportedTopology(CollapseSimError):
    pass


class InvariantViolation(CollapseSimError):
    pass


class NotMacroscopic(CollapseSimError):
    pass


class PoolExhausted(CollapseSimError):
    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step


class NonPhysical(CollapseSimError):
    def __init__(self, message: str, step: Optional[int] = None):
        suffix = f" (step {step})" if step is not None else ""
        super().__init__(f"{message}{suffix}")
        self.step = step


class MaxStepsExceeded(CollapseSimError):
    def __init__(self, message: str, steps: int):
        super().__init__(f"{message} after {steps} steps")
        self.steps = steps


class UnknownScenario(CollapseSimError):
    pass


class UnknownParameter(CollapseSimError):
    pass


class ScenarioError(CollapseSimError):
    def __init__(self, scenario: str, policy: str, cause: Exception):
        super().__init__(f"[{scenario}/{policy}] {cause}")
        self.scenario = scenario
        self.policy = policy
        self.cause = cause


class ReportWriteError(CollapseSimError):
    def __init__(self, path: str, cause: Exception):
        super().__init__(f"cannot write {path}: {cause}")
        self.path = path
        self.cause = cause
