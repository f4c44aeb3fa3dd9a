"""Bisection for the critical parameter T.

Orbits with ``tau > -T`` reach the node (1, 0); below ``-T`` they pass under
the saddle (0, -1/2).  Bisection on the classification brackets ``-T``; the
existence window ``(-T, T)`` follows from the odd symmetry of the family.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import BadBracket, BudgetExhausted
from .ivp import DEFAULT_CONFIG, IntegratorConfig
from .portrait import T_BUDGET, TRAP_RADIUS, Verdict, classify_orbit

BUDGET_DOUBLINGS = 3
RELAXED_MARGIN = -0.51
MAX_UNDETERMINED = 8


@dataclass(frozen=True)
class ThresholdResult:
    t_estimate: float
    bracket: tuple[float, float]
    evaluations: int
    undetermined_count: int
    history: tuple = field(default=(), repr=False, compare=False)

    @property
    def width(self) -> float:
        return self.bracket[1] - self.bracket[0]

    def as_dict(self) -> dict:
        return {
            "t_estimate": self.t_estimate,
            "bracket": list(self.bracket),
            "evaluations": self.evaluations,
            "undetermined_count": self.undetermined_count,
        }


class _Classifier:
    """Classification with the retry ladder for undetermined verdicts."""

    def __init__(self, config, t_budget, trap_radius):
        self.config = config
        self.t_budget = t_budget
        self.trap_radius = trap_radius
        self.evaluations = 0
        self.undetermined = 0

    def __call__(self, tau: float) -> Verdict:
        budget = self.t_budget
        for _ in range(BUDGET_DOUBLINGS + 1):
            self.evaluations += 1
            c = classify_orbit(tau, self.config, t_budget=budget, trap_radius=self.trap_radius)
            if c.verdict is not Verdict.UNDETERMINED:
                return c.verdict
            budget *= 2
        self.evaluations += 1
        c = classify_orbit(tau, self.config, t_budget=budget, trap_radius=self.trap_radius,
                           p_margin=RELAXED_MARGIN)
        if c.verdict is not Verdict.UNDETERMINED:
            return c.verdict
        # conservative: count it and bracket as escaping
        self.undetermined += 1
        if self.undetermined > MAX_UNDETERMINED:
            raise BudgetExhausted(f"{self.undetermined} undetermined classifications")
        return Verdict.ESCAPES


def find_T(
    tol: float = 1e-4,
    initial_bracket: tuple[float, float] = (-1.0, 0.0),
    config: IntegratorConfig = DEFAULT_CONFIG,
    *,
    t_budget: float = T_BUDGET,
    trap_radius: float = TRAP_RADIUS,
) -> ThresholdResult:
    """Bisect ``(tau_low, tau_high)`` until its width is at most ``tol``.

    ``tau_low`` must escape and ``tau_high`` must converge; the estimate is
    ``-(tau_low + tau_high) / 2``.

    Raises
    ------
    BadBracket
        When the endpoints do not classify as escaping / converging.
    BudgetExhausted
        When too many midpoints stay undetermined.
    """
    lo, hi = (float(v) for v in initial_bracket)
    if not lo < hi <= 0:
        raise BadBracket(f"need tau_low < tau_high <= 0, got ({lo}, {hi})")
    if not tol > 0:
        raise ValueError("tol must be positive")
    classify = _Classifier(config, t_budget, trap_radius)
    v_lo, v_hi = classify(lo), classify(hi)
    if v_lo is v_hi or v_lo is not Verdict.ESCAPES or v_hi is not Verdict.CONVERGES:
        raise BadBracket(
            f"bracket ({lo}, {hi}) classifies as ({v_lo.value}, {v_hi.value}); "
            f"expected ({Verdict.ESCAPES.value}, {Verdict.CONVERGES.value})"
        )
    history = [(lo, v_lo.value), (hi, v_hi.value)]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        verdict = classify(mid)
        history.append((mid, verdict.value))
        if verdict is Verdict.CONVERGES:
            hi = mid
        else:
            lo = mid
    return ThresholdResult(
        t_estimate=-0.5 * (lo + hi),
        bracket=(lo, hi),
        evaluations=classify.evaluations,
        undetermined_count=classify.undetermined,
        history=tuple(history),
    )

