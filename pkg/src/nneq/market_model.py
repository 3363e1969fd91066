"""Primitive types and payoff arithmetic for the two-ISP hotelling market.

ISP N (neutral) sits at 0 on the unit line, ISP NN (non-neutral) at 1.
Users are uniform on [0, 1]. Content provider G sells subscriptions to
users of both ISPs and pays ISP NN a per-subscriber transit fee.

Nothing in this module knows about equilibria; it only evaluates
utilities, shares and payoffs for given fees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Tuple

# slack for analytic coverage comparisons; binding constraints hit 0 exactly
# in exact arithmetic but may land an ulp away in floating point
COVERAGE_SLACK = 1e-12


class ISP(str, Enum):
    N = "N"
    NN = "NN"


class Regime(str, Enum):
    """Which coverage-constraint family applies to the CP's fees."""

    DeltaQGeqPtilde = "DeltaQGeqPtilde"
    DeltaQLeqPtilde = "DeltaQLeqPtilde"


@dataclass(frozen=True)
class MarketParams:
    """Primitive constants of one market instance.

    Attributes:
        v: common user valuation of Internet access.
        v_star: common user valuation of G's content.
        t: marginal transport cost; must be strictly positive.
        c: ISP per-connection cost.
    """

    v: float
    v_star: float
    t: float
    c: float = 0.0

    def __post_init__(self) -> None:
        for name in ("v", "v_star", "t", "c"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if self.t <= 0:
            raise ValueError(f"t must be > 0, got {self.t!r}")
        if self.c < 0:
            raise ValueError(f"c must be >= 0, got {self.c!r}")

    @property
    def coverage_sufficient(self) -> bool:
        """True when v >= 2t + c, which guarantees full ISP coverage at equilibrium."""
        return self.v >= 2 * self.t + self.c

    @property
    def anchor(self) -> float:
        """v* - t/2: the subscription fee the user at the midpoint can just afford."""
        return self.v_star - self.t / 2


CANONICAL = MarketParams(v=3.5, v_star=2.0, t=1.0, c=1.0)


@dataclass(frozen=True)
class StrategyProfile:
    """The five fees of the game. Negative values are subsidies."""

    p_tilde: float = 0.0
    q_N: float = 0.0
    q_NN: float = 0.0
    p_N: float = 0.0
    p_NN: float = 0.0

    @property
    def delta_q(self) -> float:
        return self.q_NN - self.q_N

    def with_(self, **changes: float) -> "StrategyProfile":
        return replace(self, **changes)

    def swapped(self) -> "StrategyProfile":
        """Mirror the ISP roles (N <-> NN); the transit fee is kept as is."""
        return replace(self, q_N=self.q_NN, q_NN=self.q_N, p_N=self.p_NN, p_NN=self.p_N)


@dataclass(frozen=True)
class MarketSplit:
    """User shares per ISP and the subscribing fraction within each.

    ``n_N + n_NN == 1`` under full ISP coverage. Splits produced by the user
    simulation may violate that when users opt out; ``note`` then explains why.
    """

    n_N: float
    n_NN: float
    n_sub_N: float
    n_sub_NN: float
    interior: bool = True
    note: str = ""

    @property
    def covered(self) -> bool:
        return abs(self.n_N + self.n_NN - 1.0) <= 1e-12


@dataclass(frozen=True)
class PayoffVector:
    pi_N: float
    pi_NN: float
    pi_G: float

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.pi_N, self.pi_NN, self.pi_G)


@dataclass(frozen=True)
class CoverageBounds:
    """Upper bounds on (q_N, q_NN) that keep every connected user subscribed.

    The unprimed pair applies when delta_q >= p_tilde (N serves at least half
    the line), the primed pair when delta_q <= p_tilde.
    """

    u_qN: float
    u_qNN: float
    u_prime_qN: float
    u_prime_qNN: float
    regime: Regime

    def applicable(self) -> Tuple[float, float]:
        """(bound on q_N, bound on q_NN) for the active regime."""
        if self.regime is Regime.DeltaQGeqPtilde:
            return self.u_qN, self.u_qNN
        return self.u_prime_qN, self.u_prime_qNN


def _check_location(x: float) -> None:
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"user location must lie in [0, 1], got {x!r}")


def _distance(isp: ISP, x: float) -> float:
    return x if ISP(isp) is ISP.N else 1.0 - x


def user_utility_internet(params: MarketParams, isp: ISP, x: float, fees: StrategyProfile) -> float:
    """Utility of the Internet connection alone: v - t*distance - p_j."""
    _check_location(x)
    p = fees.p_N if ISP(isp) is ISP.N else fees.p_NN
    return params.v - params.t * _distance(isp, x) - p


def user_utility_content(params: MarketParams, isp: ISP, x: float, fees: StrategyProfile) -> float:
    """Utility of G's content: v* - t*min(x, 1-x) - q_j.

    The distance term is the distance to the nearer end of the line, so it
    does not depend on which ISP the user joined; only the fee does.
    """
    _check_location(x)
    q = fees.q_N if ISP(isp) is ISP.N else fees.q_NN
    return params.v_star - params.t * min(x, 1.0 - x) - q


def user_total_utility(
    params: MarketParams, isp: ISP, x: float, fees: StrategyProfile, buys_content: bool
) -> float:
    """Payoff of a connected user; opting out (payoff 0) is the caller's baseline."""
    u = user_utility_internet(params, isp, x, fees)
    if buys_content:
        u += user_utility_content(params, isp, x, fees)
    return u


def isp_payoffs(params: MarketParams, fees: StrategyProfile, split: MarketSplit) -> Tuple[float, float]:
    """(pi_N, pi_NN). Transit revenue is earned on NN's subscribers only."""
    pi_NN = (fees.p_NN - params.c) * split.n_NN + fees.p_tilde * split.n_sub_NN
    pi_N = (fees.p_N - params.c) * split.n_N
    return pi_N, pi_NN


def cp_payoff(fees: StrategyProfile, split: MarketSplit) -> float:
    return (fees.q_NN - fees.p_tilde) * split.n_sub_NN + fees.q_N * split.n_sub_N


def payoffs(params: MarketParams, fees: StrategyProfile, split: MarketSplit) -> PayoffVector:
    pi_N, pi_NN = isp_payoffs(params, fees, split)
    return PayoffVector(pi_N=pi_N, pi_NN=pi_NN, pi_G=cp_payoff(fees, split))


def indifferent_user(params: MarketParams, fees: StrategyProfile) -> Tuple[float, bool]:
    """Location of the user indifferent between N and NN, both with content.

    Returns the raw (unclamped) location and whether it lies in [0, 1].
    """
    x_n = 0.5 + (fees.p_NN - fees.p_N + fees.q_NN - fees.q_N) / (2 * params.t)
    return x_n, 0.0 <= x_n <= 1.0


def clamp_unit(x: float) -> float:
    return min(1.0, max(0.0, x))


def split_from_fees(params: MarketParams, fees: StrategyProfile) -> MarketSplit:
    """Full-coverage split implied by the indifferent user, clamped to [0, 1]."""
    x_n, interior = indifferent_user(params, fees)
    n_N = clamp_unit(x_n)
    n_NN = 1.0 - n_N
    return MarketSplit(n_N=n_N, n_NN=n_NN, n_sub_N=n_N, n_sub_NN=n_NN, interior=interior)


def coverage_bounds(params: MarketParams, p_tilde: float, delta_q: float) -> CoverageBounds:
    base = params.anchor
    shift = (delta_q - p_tilde) / 6
    regime = Regime.DeltaQGeqPtilde if delta_q >= p_tilde else Regime.DeltaQLeqPtilde
    return CoverageBounds(
        u_qN=base,
        u_qNN=base + shift,
        u_prime_qN=base - shift,
        u_prime_qNN=base,
        regime=regime,
    )


def farthest_subscriber(params: MarketParams, isp: ISP, q: float) -> float:
    """Threshold location for buying content at fee ``q`` through ``isp``.

    For N: users with min(x, 1-x) <= (v* - q)/t subscribe.
    For NN: users with x >= (t + q - v*)/t on NN's half subscribe.
    """
    if ISP(isp) is ISP.N:
        return (params.v_star - q) / params.t
    return (params.t + q - params.v_star) / params.t


def _best_connected_utility(params: MarketParams, isp: ISP, x: float, fees: StrategyProfile) -> float:
    u_I = user_utility_internet(params, isp, x, fees)
    return u_I + max(0.0, user_utility_content(params, isp, x, fees))


def check_full_coverage(params: MarketParams, fees: StrategyProfile, split: MarketSplit) -> Tuple[bool, bool]:
    """Analytic full-coverage test for a split.

    Utilities are piecewise linear in x with kinks only at 1/2 and at the
    content thresholds, so the minimum over each ISP's segment is attained
    at one of those points or a segment end.

    Returns:
        (isp_ok, cp_ok): every user gets nonnegative utility at her ISP, and
        every connected user is willing to buy G's content there.
    """
    if not split.covered:
        return False, False

    n_N = split.n_N
    segments = {ISP.N: (0.0, n_N), ISP.NN: (n_N, 1.0)}
    kinks = [0.5, farthest_subscriber(params, ISP.N, fees.q_N), farthest_subscriber(params, ISP.NN, fees.q_NN)]
    # content thresholds mirror onto the other half of the line
    kinks += [1.0 - kinks[1], 1.0 - kinks[2]]

    isp_ok = True
    for isp, (lo, hi) in segments.items():
        if hi - lo <= 0:
            continue
        points = [lo, hi] + [k for k in kinks if lo < k < hi]
        worst = min(_best_connected_utility(params, isp, x, fees) for x in points)
        if worst < -COVERAGE_SLACK:
            isp_ok = False

    cp_ok = True
    if n_N > 0:
        # farthest N user, measured from the nearer end of the line
        if min(n_N, 0.5) > farthest_subscriber(params, ISP.N, fees.q_N) + COVERAGE_SLACK:
            cp_ok = False
    if n_N < 1:
        if max(n_N, 0.5) < farthest_subscriber(params, ISP.NN, fees.q_NN) - COVERAGE_SLACK:
            cp_ok = False
    return isp_ok, cp_ok
