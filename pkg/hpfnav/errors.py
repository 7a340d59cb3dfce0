from typing import Optional


class HpfNavError(Exception):
    """Base class for every error raised by hpfnav."""


class ScenarioError(HpfNavError):
    def __init__(self, message: str, location: Optional[str] = None, line: Optional[int] = None):
        self.location = location
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if location:
            where.append(location)
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(f"{prefix}{message}")


class ScenarioParseError(ScenarioError):
    pass


class ScenarioValidationError(ScenarioError):
    pass


class SolverError(HpfNavError):
    pass


class NonConvergence(SolverError):
    def __init__(self, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        super().__init__(f"relaxation did not converge: residual {residual:.3e} after {iterations} sweeps")


class DisconnectedDomain(SolverError):
    pass


class AllZeroGamma(SolverError):
    pass


class OffsetCellInvalid(SolverError):
    pass


class SnapError(SolverError):
    pass


class PointNotAdmissible(HpfNavError):
    pass


class ZeroGuidance(HpfNavError):
    pass


class SteeringOutOfRange(HpfNavError):
    pass


class MissingReferenceMax(HpfNavError):
    pass


class StalledPath(HpfNavError):
    pass


class LeftAdmissibleSpace(HpfNavError):
    pass


class NumericalBlowup(HpfNavError):
    pass
