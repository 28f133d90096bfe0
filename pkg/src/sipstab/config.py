"""Central tolerance record shared by every solver in the package."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace


@dataclass(frozen=True)
class Tolerances:
    """Numerical thresholds.

    Parameters
    ----------
    feasibility : float
        Slack below which a constraint counts as active and above which a
        point counts as strictly feasible.
    optimality : float
        Wolfe / KKT stopping threshold for the min-norm and NNLS solvers.
    bisection : float
        Relative bracket width at which the fractional-sup bisection stops.
    membership : float
        Cone-distance threshold for Farkas, coderivative and stationarity
        membership tests.
    violation : float
        Residuals above this are reported as definite violations; the band
        between ``membership`` and ``violation`` is reported as inconclusive.
    primal : float
        Accuracy target of the primal projection solver.
    """

    feasibility: float = 1e-9
    optimality: float = 1e-9
    bisection: float = 1e-9
    membership: float = 1e-7
    violation: float = 1e-3
    primal: float = 1e-7

    def updated(self, **changes) -> "Tolerances":
        return replace(self, **{k: float(v) for k, v in changes.items() if v is not None})

    def as_dict(self) -> dict:
        return asdict(self)


DEFAULT_TOLERANCES = Tolerances()
