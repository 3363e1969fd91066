"""Closed-form backward induction for the four-stage pricing game.

Stage order of play: ISP NN posts the transit fee, G sets its two
subscription fees, the ISPs set connection prices, users choose. Solved
here from the last stage back:

* stage 4: the indifferent user fixes the split (``market_model``);
* stage 3: hotelling price equilibrium given (p_tilde, q_N, q_NN);
* stage 2: G's constrained best response, one of four branches in p_tilde;
* stage 1: ISP NN's anticipated payoff, flat at 9t/8 for p_tilde >= 5t/4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple

from .market_model import (
    MarketParams,
    MarketSplit,
    PayoffVector,
    StrategyProfile,
    check_full_coverage,
    clamp_unit,
    payoffs,
)


class Branch(str, Enum):
    B1 = "B1"  # p_tilde <= -5t/4
    B2 = "B2"  # -5t/4 <= p_tilde <= 0
    B3 = "B3"  # 0 <= p_tilde <= 5t/4
    B4 = "B4"  # p_tilde >= 5t/4


class CandidateSetId(str, Enum):
    Set1 = "Set1"
    Set2 = "Set2"
    Set3 = "Set3"
    Set4 = "Set4"


class Binding(str, Enum):
    qNN_at_u = "qNN_at_u"
    qN_at_u = "qN_at_u"
    qNN_at_uprime = "qNN_at_uprime"
    qN_at_uprime = "qN_at_uprime"


def breakpoints(t: float) -> Tuple[float, float, float]:
    return (-1.25 * t, 0.0, 1.25 * t)


def stage3_prices(params: MarketParams, p_tilde: float, q_N: float, q_NN: float) -> Tuple[float, float]:
    """Connection prices (p_N, p_NN) at the stage-3 Nash equilibrium."""
    t, c = params.t, params.c
    dq = q_NN - q_N
    p_NN = t + c - dq / 3 - 2 * p_tilde / 3
    p_N = t + c + dq / 3 - p_tilde / 3
    return p_N, p_NN


def stage4_shares_reduced(params: MarketParams, p_tilde: float, q_N: float, q_NN: float) -> MarketSplit:
    """Split after substituting stage-3 prices, with every user subscribing.

    The raw share is clamped to [0, 1]; ``interior`` is False when clamping
    was needed.
    """
    raw = 0.5 + (q_NN - q_N - p_tilde) / (6 * params.t)
    n_N = clamp_unit(raw)
    n_NN = 1.0 - n_N
    return MarketSplit(n_N=n_N, n_NN=n_NN, n_sub_N=n_N, n_sub_NN=n_NN, interior=0.0 <= raw <= 1.0)


def cp_objective(params: MarketParams, p_tilde: float, q_N: float, q_NN: float) -> float:
    """G's stage-2 payoff with stage-3/4 responses substituted (shares unclamped)."""
    shift = (q_NN - q_N - p_tilde) / (6 * params.t)
    return (q_NN - p_tilde) * (0.5 - shift) + q_N * (0.5 + shift)


@dataclass(frozen=True)
class CandidateSet:
    """One of the four regimes of G's problem, each pinning one fee to its bound.

    ``interior_delta_q`` is the first-order-condition maximiser of G's payoff
    along the set's binding line. ``eliminated`` marks sets whose FOC point
    violates the set's own condition for every p_tilde.
    """

    id: CandidateSetId
    binding: Binding
    p_tilde: float
    interior_delta_q: float
    eliminated: bool

    def contains(self, delta_q: float, tol: float = 0.0) -> bool:
        """Whether (p_tilde, delta_q) satisfies this set's condition."""
        p = self.p_tilde
        if self.id is CandidateSetId.Set1:
            return -5 * delta_q - tol <= p <= delta_q + tol
        if self.id is CandidateSetId.Set2:
            return p <= min(delta_q, -5 * delta_q) + tol
        if self.id is CandidateSetId.Set3:
            return p >= max(delta_q, -5 * delta_q) - tol
        return delta_q - tol <= p <= -5 * delta_q + tol

    def delta_q_interval(self) -> Tuple[float, float]:
        """The set's condition rewritten as lo <= delta_q <= hi (may be empty)."""
        p = self.p_tilde
        if self.id is CandidateSetId.Set1:
            return max(p, -p / 5), math.inf
        if self.id is CandidateSetId.Set2:
            return p, -p / 5
        if self.id is CandidateSetId.Set3:
            return -p / 5, p
        return -math.inf, min(p, -p / 5)

    @property
    def interior_feasible(self) -> bool:
        return not self.eliminated and self.contains(self.interior_delta_q, tol=1e-12)

    def fees(self, params: MarketParams, delta_q: float) -> Tuple[float, float]:
        """(q_N, q_NN) on the binding line at the given delta_q."""
        a = params.anchor
        shift = (delta_q - self.p_tilde) / 6
        if self.binding is Binding.qNN_at_u:
            q_NN = a + shift
            return q_NN - delta_q, q_NN
        if self.binding is Binding.qN_at_u:
            return a, a + delta_q
        if self.binding is Binding.qNN_at_uprime:
            return a - delta_q, a
        q_N = a - shift
        return q_N, q_N + delta_q

    def payoff(self, params: MarketParams, delta_q: float) -> float:
        q_N, q_NN = self.fees(params, delta_q)
        return cp_objective(params, self.p_tilde, q_N, q_NN)


def candidate_sets(params: MarketParams, p_tilde: float) -> List[CandidateSet]:
    t = params.t
    return [
        CandidateSet(CandidateSetId.Set1, Binding.qNN_at_u, p_tilde, p_tilde - t, eliminated=True),
        CandidateSet(CandidateSetId.Set2, Binding.qN_at_u, p_tilde, p_tilde + 1.5 * t, eliminated=False),
        CandidateSet(CandidateSetId.Set3, Binding.qNN_at_uprime, p_tilde, p_tilde - 1.5 * t, eliminated=False),
        CandidateSet(CandidateSetId.Set4, Binding.qN_at_uprime, p_tilde, p_tilde + t, eliminated=True),
    ]


@dataclass(frozen=True)
class Theorem1Branch:
    """G's best response to a transit fee."""

    branch: Branch
    delta_q_e: float
    q_N_e: float
    q_NN_e: float


def branch_formula(params: MarketParams, branch: Branch, p_tilde: float) -> Theorem1Branch:
    """Evaluate one branch's formulas at p_tilde, ignoring its validity interval."""
    t, a = params.t, params.anchor
    branch = Branch(branch)
    if branch is Branch.B1:
        dq = p_tilde + 1.5 * t
    elif branch is Branch.B4:
        dq = p_tilde - 1.5 * t
    else:
        dq = -p_tilde / 5
    if branch in (Branch.B1, Branch.B2):
        return Theorem1Branch(branch, dq, a, a + dq)
    return Theorem1Branch(branch, dq, a - dq, a)


def select_branch(params: MarketParams, p_tilde: float) -> Branch:
    lo, mid, hi = breakpoints(params.t)
    if p_tilde <= lo:
        return Branch.B1
    if p_tilde <= mid:
        return Branch.B2
    if p_tilde <= hi:
        return Branch.B3
    return Branch.B4


def cp_best_response(params: MarketParams, p_tilde: float) -> Theorem1Branch:
    return branch_formula(params, select_branch(params, p_tilde), p_tilde)


def stage1_pieces(params: MarketParams, p_tilde: float) -> Tuple[float, float, float]:
    """The low, middle and high pieces of ``stage1_payoff``, each evaluated at p_tilde."""
    t = params.t
    return t / 8, (t + 2 * p_tilde / 5) * (0.5 + p_tilde / (5 * t)), 9 * t / 8


def stage1_payoff(params: MarketParams, p_tilde: float) -> float:
    """ISP NN's payoff anticipating stages 2-4, as a function of its transit fee.

    The middle piece uses p_tilde/(5t) in the share term so the function is
    continuous at +-5t/4 for every t.
    """
    lo, _, hi = breakpoints(params.t)
    low, middle, high = stage1_pieces(params, p_tilde)
    if p_tilde <= lo:
        return low
    if p_tilde >= hi:
        return high
    return middle


@dataclass(frozen=True)
class EquilibriumReport:
    params: MarketParams
    fees: StrategyProfile
    split: MarketSplit
    payoffs: PayoffVector
    branch: Theorem1Branch
    coverage: Tuple[bool, bool]
    p_tilde_plateau: bool

    @property
    def coverage_sufficient(self) -> bool:
        return self.params.coverage_sufficient

    @property
    def coverage_ok(self) -> bool:
        return self.coverage[0] and self.coverage[1] and self.coverage_sufficient

    def warnings(self) -> List[str]:
        out = []
        p = self.params
        if not p.coverage_sufficient:
            out.append(f"v = {p.v!r} < 2t + c = {2 * p.t + p.c!r}: full ISP coverage is not guaranteed")
        if not self.coverage[0]:
            out.append("some users get negative utility at their ISP (ISP coverage fails)")
        if not self.coverage[1]:
            out.append("some connected users decline G's content (CP coverage fails)")
        if not self.split.interior:
            out.append("indifferent user lies outside [0, 1]; split was clamped")
        return out


def minimal_plateau(params: MarketParams) -> float:
    """Smallest transit fee on ISP NN's payoff plateau."""
    return 1.25 * params.t


def solve_spe(params: MarketParams, p_tilde: Optional[float] = None) -> EquilibriumReport:
    """Sub-game perfect equilibrium.

    Args:
        params: market constants.
        p_tilde: transit fee to play. ``None`` selects the smallest fee on the
            stage-1 plateau (5t/4), which is also the one G prefers there.

    Returns:
        The full report. Parameter regions where the closed forms lose validity
        are flagged in ``coverage`` and ``split.interior``, not raised.
    """
    if p_tilde is None:
        p_tilde = minimal_plateau(params)
    elif not math.isfinite(p_tilde):
        raise ValueError(f"p_tilde must be finite, got {p_tilde!r}")

    br = cp_best_response(params, p_tilde)
    p_N, p_NN = stage3_prices(params, p_tilde, br.q_N_e, br.q_NN_e)
    fees = StrategyProfile(p_tilde=p_tilde, q_N=br.q_N_e, q_NN=br.q_NN_e, p_N=p_N, p_NN=p_NN)
    split = stage4_shares_reduced(params, p_tilde, br.q_N_e, br.q_NN_e)
    return EquilibriumReport(
        params=params,
        fees=fees,
        split=split,
        payoffs=payoffs(params, fees, split),
        branch=br,
        coverage=check_full_coverage(params, fees, split),
        p_tilde_plateau=p_tilde >= minimal_plateau(params),
    )
