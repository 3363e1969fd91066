"""Brute-force verifiers for the closed-form equilibrium.

Every check here recomputes payoffs from the raw model with plain numpy:
discrete user populations for stage 4, best-response iteration on a price
grid for stage 3, exhaustive grid search over (q_N, q_NN) for stage 2 and
over the transit fee for stage 1. None of it calls the closed-form
solvers it is meant to check, except where a verdict compares the two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from . import equilibrium as eq
from .market_model import CoverageBounds, MarketParams, MarketSplit, StrategyProfile, coverage_bounds

STAGES = ("stage4", "stage3", "stage2", "stage1")
# feasibility slack for grid points sitting exactly on a coverage bound
_FEAS_SLACK = 1e-9


class OracleError(Exception):
    """Base class for oracle failures that become failed verdicts."""


class GridTooNarrow(OracleError):
    pass


class EmptyFeasibleSet(OracleError):
    pass


@dataclass(frozen=True)
class GridSpec:
    lo: float
    hi: float
    steps: int

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or not self.lo < self.hi:
            raise ValueError(f"grid needs finite lo < hi, got [{self.lo}, {self.hi}]")
        if int(self.steps) != self.steps or self.steps < 2:
            raise ValueError(f"grid needs at least 2 steps, got {self.steps}")

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / (self.steps - 1)

    def points(self) -> np.ndarray:
        # weighted form keeps rational grid points (e.g. 1.25 on [-2, 2]) exact
        n = self.steps - 1
        i = np.arange(self.steps, dtype=float)
        return (self.lo * (n - i) + self.hi * i) / n

    def halved(self) -> "GridSpec":
        return GridSpec(self.lo, self.hi, 2 * self.steps - 1)


@dataclass
class OracleVerdict:
    target: str
    closed_form_value: Any
    oracle_value: Any
    discrepancy: float
    tolerance_used: float
    passed: bool
    diagnostics: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status} {self.target}: closed={_fmt(self.closed_form_value)} oracle={_fmt(self.oracle_value)} "
            f"disc={self.discrepancy:.3g} tol={self.tolerance_used:.3g} {self.diagnostics}".rstrip()
        )


def _fmt(value: Any) -> str:
    if value is None:
        return "-"
    if isinstance(value, (tuple, list)):
        return "(" + ", ".join(_fmt(v) for v in value) + ")"
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.10g}"
    return str(value)


def _verdict(target: str, closed: Any, oracle: Any, tol: float, diagnostics: str = "") -> OracleVerdict:
    a = np.atleast_1d(np.asarray(closed, dtype=float))
    b = np.atleast_1d(np.asarray(oracle, dtype=float))
    disc = float(np.max(np.abs(a - b)))
    return OracleVerdict(target, closed, oracle, disc, tol, disc <= tol, diagnostics)


def _failed(target: str, closed: Any, err: Exception, diagnostics: str = "") -> OracleVerdict:
    msg = f"{type(err).__name__}: {err}"
    if diagnostics:
        msg = f"{diagnostics} {msg}"
    return OracleVerdict(target, closed, None, math.inf, 0.0, False, msg)


# ---------------------------------------------------------------------------
# stage 4: users


def _option_utilities(params: MarketParams, fees: StrategyProfile, x: np.ndarray) -> np.ndarray:
    """Rows: N+content, N only, NN+content, NN only, out (ordered by tie priority)."""
    t = params.t
    near = np.minimum(x, 1.0 - x)
    u_N = params.v - t * x - fees.p_N
    u_NN = params.v - t * (1.0 - x) - fees.p_NN
    g_N = params.v_star - t * near - fees.q_N
    g_NN = params.v_star - t * near - fees.q_NN
    return np.stack([u_N + g_N, u_N, u_NN + g_NN, u_NN, np.zeros_like(x)])


def _split_from_choices(counts: np.ndarray, total: float, interior: Optional[bool] = None) -> MarketSplit:
    n_sub_N, n_only_N, n_sub_NN, n_only_NN, n_out = (float(c) / total for c in counts)
    n_N = n_sub_N + n_only_N
    n_NN = n_sub_NN + n_only_NN
    notes = []
    if n_out > 0:
        notes.append(f"{n_out:.6g} of users opt out; full ISP coverage violated")
    if n_only_N + n_only_NN > 0:
        notes.append(f"{n_only_N + n_only_NN:.6g} of users skip content; full CP coverage violated")
    if interior is None:
        interior = n_out == 0 and 0.0 < n_N < 1.0
    return MarketSplit(n_N, n_NN, n_sub_N, n_sub_NN, interior=interior, note="; ".join(notes))


def simulate_users(params: MarketParams, fees: StrategyProfile, m: int) -> MarketSplit:
    """Let m evenly placed users each pick their best option.

    Users sit at (i + 1/2)/m. Ties go to the earlier option in the order
    N+content, N only, NN+content, NN only, out: so an indifferent user joins
    N, subscribes when indifferent about content, and participates at zero.
    """
    if m < 2:
        raise ValueError(f"need m >= 2 users, got {m}")
    x = (np.arange(m, dtype=float) + 0.5) / m
    choice = np.argmax(_option_utilities(params, fees, x), axis=0)
    counts = np.bincount(choice, minlength=5)
    return _split_from_choices(counts, m)


def participation_shares(params: MarketParams, fees: StrategyProfile) -> MarketSplit:
    """Exact continuum version of :func:`simulate_users`.

    Each option's utility is linear on [0, 1/2] and on [1/2, 1], so the
    best option only changes where two of the lines cross. Measuring the
    pieces between crossings gives the exact shares, including partial
    participation.
    """
    measure = np.zeros(5)
    for lo, hi in ((0.0, 0.5), (0.5, 1.0)):
        probe = np.array([lo, hi])
        vals = _option_utilities(params, fees, probe)
        slope = (vals[:, 1] - vals[:, 0]) / (hi - lo)
        cuts = {lo, hi}
        for i in range(5):
            for j in range(i + 1, 5):
                ds = slope[i] - slope[j]
                if ds != 0:
                    x = lo + (vals[j, 0] - vals[i, 0]) / ds
                    if lo < x < hi:
                        cuts.add(float(x))
        cuts = sorted(cuts)
        mids = np.array([(a + b) / 2 for a, b in zip(cuts, cuts[1:])])
        choice = np.argmax(_option_utilities(params, fees, mids), axis=0)
        np.add.at(measure, choice, np.diff(cuts))
    return _split_from_choices(measure, 1.0)


# ---------------------------------------------------------------------------
# stage 3: connection prices


def default_price_grid(params: MarketParams, steps: int = 2001) -> GridSpec:
    return GridSpec(params.c - params.t, params.c + 3 * params.t, steps)


def _isp_payoff_grid(
    params: MarketParams, p_tilde: float, q_N: float, q_NN: float, p_N: np.ndarray, p_NN: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """(pi_N, pi_NN) with the clamped indifferent-user split and full CP coverage."""
    x = 0.5 + (p_NN - p_N + q_NN - q_N) / (2 * params.t)
    n_N = np.clip(x, 0.0, 1.0)
    n_NN = 1.0 - n_N
    return (p_N - params.c) * n_N, (p_NN - params.c + p_tilde) * n_NN


def _isp_payoffs_simulated(
    params: MarketParams, fees: StrategyProfile, m: int
) -> Tuple[float, float]:
    s = simulate_users(params, fees, m)
    return (fees.p_N - params.c) * s.n_N, (fees.p_NN - params.c) * s.n_NN + fees.p_tilde * s.n_sub_NN


class NashResult(NamedTuple):
    p_N: float
    p_NN: float
    converged: bool
    iterations: int


def price_nash_oracle(
    params: MarketParams,
    p_tilde: float,
    q_N: float,
    q_NN: float,
    grid: Optional[GridSpec] = None,
    max_iters: int = 100,
) -> NashResult:
    """Iterated best response of the two ISPs on a price grid.

    Starts from (t + c, t + c) snapped to the grid and alternates N then NN.
    Converged means a full round left both prices on the same grid points.
    A non-converged run returns its last iterate with ``converged=False``.

    Raises:
        GridTooNarrow: a best response landed on the edge of the grid.
    """
    grid = grid or default_price_grid(params)
    pts = grid.points()
    last = grid.steps - 1
    start = int(np.argmin(np.abs(pts - (params.t + params.c))))
    i_N = i_NN = start

    for it in range(1, max_iters + 1):
        pi_N, _ = _isp_payoff_grid(params, p_tilde, q_N, q_NN, pts, pts[i_NN])
        new_N = int(np.argmax(pi_N))
        _, pi_NN = _isp_payoff_grid(params, p_tilde, q_N, q_NN, pts[new_N], pts)
        new_NN = int(np.argmax(pi_NN))
        for who, idx in (("N", new_N), ("NN", new_NN)):
            if idx in (0, last):
                raise GridTooNarrow(
                    f"best response of ISP {who} at grid edge {pts[idx]:.6g} of [{grid.lo:.6g}, {grid.hi:.6g}]"
                )
        if new_N == i_N and new_NN == i_NN:
            return NashResult(float(pts[i_N]), float(pts[i_NN]), True, it)
        i_N, i_NN = new_N, new_NN
    return NashResult(float(pts[i_N]), float(pts[i_NN]), False, max_iters)


def price_deviation_gain(
    params: MarketParams, fees: StrategyProfile, grid: Optional[GridSpec] = None
) -> Tuple[float, float]:
    """Largest payoff gain either ISP gets from a unilateral move to any grid price.

    Payoffs use the clamped indifferent-user split with every user subscribing.

    Returns:
        (gain for N, gain for NN); non-positive means no profitable deviation.
    """
    grid = grid or default_price_grid(params)
    pts = grid.points()
    args = (params, fees.p_tilde, fees.q_N, fees.q_NN)
    pi_N, pi_NN = _isp_payoff_grid(*args, np.float64(fees.p_N), np.float64(fees.p_NN))
    dev_N, _ = _isp_payoff_grid(*args, pts, np.float64(fees.p_NN))
    _, dev_NN = _isp_payoff_grid(*args, np.float64(fees.p_N), pts)
    return float(np.max(dev_N) - pi_N), float(np.max(dev_NN) - pi_NN)


@dataclass
class SimulatedDeviation:
    """Outcome of :func:`simulated_deviation_check`.

    ``gain`` covers deviations after which every user still connects and
    subscribes; ``off_premise`` counts the others and ``off_premise_gain`` is
    the best gain among them (informational: the price subgame is only
    solved under full coverage).
    """

    gain_N: float
    gain_NN: float
    payoff_gap: float
    tried: int
    off_premise: int
    off_premise_gain: float


def simulated_deviation_check(
    params: MarketParams,
    fees: StrategyProfile,
    m: int,
    grid: Optional[GridSpec] = None,
    stride: int = 50,
) -> SimulatedDeviation:
    """Re-check the price equilibrium with payoffs from :func:`simulate_users`.

    Tries every ``stride``-th grid price plus the five grid prices nearest
    each ISP's current price. ``payoff_gap`` is the largest difference
    between simulated and analytic payoffs over full-coverage outcomes.
    """
    grid = grid or default_price_grid(params)
    pts = grid.points()
    base_split = simulate_users(params, fees, m)
    base = _isp_payoffs_simulated(params, fees, m)
    analytic = _isp_payoff_grid(params, fees.p_tilde, fees.q_N, fees.q_NN, np.float64(fees.p_N), np.float64(fees.p_NN))
    gap = max(abs(base[0] - float(analytic[0])), abs(base[1] - float(analytic[1])))
    if base_split.note:
        gap = math.inf

    gains = [-math.inf, -math.inf]
    off_gain = -math.inf
    tried = off = 0
    for slot, own in ((0, fees.p_N), (1, fees.p_NN)):
        near = np.argsort(np.abs(pts - own), kind="stable")[:5]
        for i in sorted(set(range(0, grid.steps, stride)) | {int(k) for k in near}):
            price = float(pts[i])
            trial = fees.with_(p_N=price) if slot == 0 else fees.with_(p_NN=price)
            split = simulate_users(params, trial, m)
            pi = (price - params.c) * split.n_N if slot == 0 else (
                (price - params.c) * split.n_NN + fees.p_tilde * split.n_sub_NN
            )
            tried += 1
            full = split.covered and split.n_sub_N == split.n_N and split.n_sub_NN == split.n_NN
            if not full:
                off += 1
                off_gain = max(off_gain, pi - base[slot])
                continue
            gains[slot] = max(gains[slot], pi - base[slot])
            a_N, a_NN = _isp_payoff_grid(params, fees.p_tilde, fees.q_N, fees.q_NN, np.float64(trial.p_N), np.float64(trial.p_NN))
            gap = max(gap, abs(pi - float(a_N if slot == 0 else a_NN)))
    return SimulatedDeviation(gains[0], gains[1], gap, tried, off, off_gain)


# ---------------------------------------------------------------------------
# stage 2: content provider


def default_q_grid(params: MarketParams, steps: int = 2001) -> GridSpec:
    a = params.v_star - params.t / 2
    return GridSpec(a - 3 * params.t, a + params.t, steps)


class CPArgmax(NamedTuple):
    q_N: float
    q_NN: float
    pi_G: float
    spacing: float


def _cp_payoff_grid(params: MarketParams, p_tilde: float, q_N: np.ndarray, q_NN: np.ndarray) -> np.ndarray:
    n_NN = 0.5 - (q_NN - q_N - p_tilde) / (6 * params.t)
    return (q_NN - p_tilde) * n_NN + q_N * (1.0 - n_NN)


def _cp_feasible(params: MarketParams, p_tilde: float, q_N: np.ndarray, q_NN: np.ndarray) -> np.ndarray:
    a = params.v_star - params.t / 2
    shift = (q_NN - q_N - p_tilde) / 6
    n_side = (shift >= 0) & (q_N <= a + _FEAS_SLACK) & (q_NN <= a + shift + _FEAS_SLACK)
    nn_side = (shift <= 0) & (q_N <= a - shift + _FEAS_SLACK) & (q_NN <= a + _FEAS_SLACK)
    return n_side | nn_side


def cp_argmax_oracle(
    params: MarketParams,
    p_tilde: float,
    grid_qN: Optional[GridSpec] = None,
    grid_qNN: Optional[GridSpec] = None,
    chunk: int = 16,
) -> CPArgmax:
    """Exhaustive search of G's stage-2 problem over a (q_N, q_NN) grid.

    Grid points violating the coverage bounds of their regime are discarded;
    ties resolve to the first point in row-major (q_N, q_NN) order.

    Raises:
        EmptyFeasibleSet: no grid point is feasible.
        GridTooNarrow: the maximiser lies on the grid's edge.
    """
    grid_qN = grid_qN or default_q_grid(params)
    grid_qNN = grid_qNN or default_q_grid(params)
    qN_pts = grid_qN.points()
    qNN = grid_qNN.points()[None, :]
    cap = params.v_star - params.t / 2 + _FEAS_SLACK
    qNN_capped = qNN <= cap

    best = (-math.inf, -1, -1)
    # small row blocks keep the temporaries in cache
    for start in range(0, grid_qN.steps, chunk):
        qN = qN_pts[start : start + chunk, None]
        gap = qNN - qN
        gap -= p_tilde
        shift = gap / 6
        # payoff q_NN*n_NN - p_tilde*n_NN + q_N*n_N, regrouped
        pi = gap * (0.5 - shift / params.t)
        pi += qN
        n_side = (qNN - shift) <= cap
        n_side &= qN <= cap
        nn_side = (qN + shift) <= cap
        nn_side &= qNN_capped
        pi[~np.where(gap >= 0, n_side, nn_side)] = -np.inf
        flat = int(np.argmax(pi))
        r, col = divmod(flat, grid_qNN.steps)
        if pi[r, col] > best[0]:
            best = (float(pi[r, col]), start + r, col)

    value, i, j = best
    if i < 0:
        raise EmptyFeasibleSet(f"no feasible (q_N, q_NN) on the grid at p_tilde={p_tilde:.6g}")
    if i in (0, grid_qN.steps - 1) or j in (0, grid_qNN.steps - 1):
        raise GridTooNarrow(f"CP argmax on grid edge at p_tilde={p_tilde:.6g}: ({qN_pts[i]:.6g}, {qNN[0, j]:.6g})")
    spacing = max(grid_qN.spacing, grid_qNN.spacing)
    return CPArgmax(float(qN_pts[i]), float(qNN[0, j]), value, spacing)


def lemma1_check(result: CPArgmax, bounds: CoverageBounds, spacing: float) -> bool:
    """True iff at least one fee sits within one grid spacing of its active bound."""
    u_N, u_NN = bounds.applicable()
    return abs(result.q_N - u_N) <= spacing or abs(result.q_NN - u_NN) <= spacing


def candidate_set_scan(
    params: MarketParams, p_tilde: float, set_id: eq.CandidateSetId, steps: int = 4001, width: float = 4.0
) -> Optional[Tuple[float, float]]:
    """Best feasible point inside one candidate set, by a 1-D scan of delta_q.

    Points are placed along the set's binding line over its delta_q interval
    (clipped to +-width*t around p_tilde); only points meeting both coverage
    bounds are kept.

    Returns:
        (delta_q, pi_G) of the best point, or None when the set is empty.
    """
    cs = next(s for s in eq.candidate_sets(params, p_tilde) if s.id is eq.CandidateSetId(set_id))
    lo, hi = cs.delta_q_interval()
    lo = max(lo, p_tilde - width * params.t)
    hi = min(hi, p_tilde + width * params.t)
    if lo > hi:
        return None
    dq = np.linspace(lo, hi, steps) if hi > lo else np.array([lo])
    a = params.v_star - params.t / 2
    shift = (dq - p_tilde) / 6
    if cs.binding is eq.Binding.qNN_at_u:
        q_NN = a + shift
        q_N = q_NN - dq
    elif cs.binding is eq.Binding.qN_at_u:
        q_N = np.full_like(dq, a)
        q_NN = q_N + dq
    elif cs.binding is eq.Binding.qNN_at_uprime:
        q_NN = np.full_like(dq, a)
        q_N = q_NN - dq
    else:
        q_N = a - shift
        q_NN = q_N + dq
    pi = np.where(_cp_feasible(params, p_tilde, q_N, q_NN), _cp_payoff_grid(params, p_tilde, q_N, q_NN), -np.inf)
    k = int(np.argmax(pi))
    if not np.isfinite(pi[k]):
        return None
    return float(dq[k]), float(pi[k])


# ---------------------------------------------------------------------------
# stage 1: transit fee


def default_p_tilde_grid(params: MarketParams, steps: int = 401) -> GridSpec:
    return GridSpec(-2 * params.t, 2 * params.t, steps)


@dataclass
class TransitFeeArgmax:
    p_tilde: float
    pi_NN: float
    argmax_set: np.ndarray
    grid: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)


def _nn_payoff_from_stage2(
    params: MarketParams, p_tilde: float, q_N: float, q_NN: float, deep: bool
) -> float:
    if deep:
        res = price_nash_oracle(params, p_tilde, q_N, q_NN)
        p_N, p_NN = res.p_N, res.p_NN
        if not res.converged:
            raise OracleError(f"price best response did not converge at p_tilde={p_tilde:.6g}")
    else:
        p_N, p_NN = eq.stage3_prices(params, p_tilde, q_N, q_NN)
    _, pi_NN = _isp_payoff_grid(params, p_tilde, q_N, q_NN, np.float64(p_N), np.float64(p_NN))
    return float(pi_NN)


def transit_fee_argmax_oracle(
    params: MarketParams, grid: Optional[GridSpec] = None, deep: bool = False, tol: float = 1e-9
) -> TransitFeeArgmax:
    """Grid argmax of ISP NN's anticipated payoff over the transit fee.

    By default G's response comes from the closed-form best response. With
    ``deep`` G's fees come from :func:`cp_argmax_oracle` and the ISP prices
    from :func:`price_nash_oracle`, so no closed form is involved.

    ``p_tilde`` is the smallest grid fee whose payoff is within ``tol`` of
    the maximum.

    Raises:
        GridTooNarrow: the grid stops short of the plateau at 5t/4.
    """
    grid = grid or default_p_tilde_grid(params)
    if grid.hi < 1.25 * params.t:
        raise GridTooNarrow(f"transit-fee grid ends at {grid.hi:.6g} < 5t/4 = {1.25 * params.t:.6g}")
    pts = grid.points()
    values = np.empty_like(pts)
    for k, p in enumerate(pts):
        p = float(p)
        if deep:
            cp = cp_argmax_oracle(params, p)
            q_N, q_NN = cp.q_N, cp.q_NN
        else:
            br = eq.cp_best_response(params, p)
            q_N, q_NN = br.q_N_e, br.q_NN_e
        values[k] = _nn_payoff_from_stage2(params, p, q_N, q_NN, deep)
    best = float(np.max(values))
    argmax_set = pts[values >= best - tol]
    # smallest fee of the (numerically flat) argmax set
    return TransitFeeArgmax(float(argmax_set[0]), best, argmax_set, pts, values)


# ---------------------------------------------------------------------------
# orchestration


def random_params(rng: np.random.Generator, t: float = 1.0) -> MarketParams:
    """Parameters that always satisfy the coverage-sufficient condition v >= 2t + c."""
    c = rng.uniform(0.0, t)
    v_star = rng.uniform(t, 3 * t) + t / 2
    v = 2 * t + c + rng.uniform(0.0, t)
    return MarketParams(v=v, v_star=v_star, t=t, c=c)


@dataclass(frozen=True)
class Budget:
    """Grid sizes and probe counts for :func:`verify`."""

    q_steps: int = 2001
    price_steps: int = 2001
    p_tilde_grid: Optional[GridSpec] = None
    m_users: int = 100_000
    n_random: int = 3
    max_iters: int = 100


def covered_fees(params: MarketParams, p_tilde: float, delta_q: float, slack: float = 0.0) -> Tuple[float, float]:
    """(q_N, q_NN) with the given gap, ``slack`` below the tighter coverage bound."""
    u_N, u_NN = coverage_bounds(params, p_tilde, delta_q).applicable()
    q_NN = min(u_NN, u_N + delta_q) - slack
    return q_NN - delta_q, q_NN


def probe_transit_fees(params: MarketParams, rng: np.random.Generator, n_random: int) -> List[float]:
    t = params.t
    fixed = [-2 * t, -1.25 * t, -0.5 * t, 0.0, 0.5 * t, 1.25 * t, 2 * t]
    return fixed + [float(p) for p in rng.uniform(-2 * t, 2 * t, n_random)]


def _branches_at(params: MarketParams, p_tilde: float) -> List[eq.Branch]:
    lo, mid, hi = eq.breakpoints(params.t)
    pairs = {lo: [eq.Branch.B1, eq.Branch.B2], mid: [eq.Branch.B2, eq.Branch.B3], hi: [eq.Branch.B3, eq.Branch.B4]}
    return pairs.get(p_tilde, [eq.select_branch(params, p_tilde)])


def _verify_stage4(params: MarketParams, probes: Sequence[float], budget: Budget) -> Iterable[OracleVerdict]:
    m = budget.m_users
    for p in probes:
        rep = eq.solve_spe(params, p)
        fees = rep.fees
        sim = simulate_users(params, fees, m)
        tag = f"p_tilde={p:.6g}"
        if all(rep.coverage):
            x_n = 0.5 + (fees.p_NN - fees.p_N + fees.q_NN - fees.q_N) / (2 * params.t)
            closed = min(1.0, max(0.0, x_n))
            yield _verdict("indifferent_user", closed, sim.n_N, 1e-4, tag)
            yield _verdict(
                "full_cp_coverage", (sim.n_N, sim.n_NN), (sim.n_sub_N, sim.n_sub_NN), 1e-4, tag
            )
        else:
            exact = participation_shares(params, fees)
            note = f"{tag} coverage violated {rep.coverage}; compared with exact partial-participation shares"
            yield _verdict(
                "participation_shares",
                (exact.n_N, exact.n_NN, exact.n_sub_N, exact.n_sub_NN),
                (sim.n_N, sim.n_NN, sim.n_sub_N, sim.n_sub_NN),
                1e-4,
                note,
            )


def _verify_stage3(
    params: MarketParams, probes: Sequence[float], budget: Budget, rng: np.random.Generator, deep: bool
) -> Iterable[OracleVerdict]:
    grid = default_price_grid(params, budget.price_steps)
    t = params.t
    cases = []
    for p in probes:
        br = eq.cp_best_response(params, p)
        cases.append((p, br.q_N_e, br.q_NN_e))
    for _ in range(budget.n_random):
        p, dq, slack = rng.uniform(-t, t), rng.uniform(-t, t), rng.uniform(0, t / 4)
        cases.append((float(p), *covered_fees(params, float(p), float(dq), float(slack))))
    for p, q_N, q_NN in cases:
        closed = eq.stage3_prices(params, p, q_N, q_NN)
        tag = f"p_tilde={p:.6g} delta_q={q_NN - q_N:.6g}"
        try:
            res = price_nash_oracle(params, p, q_N, q_NN, grid, budget.max_iters)
        except OracleError as err:
            yield _failed("stage3_prices", closed, err, tag)
            continue
        if not res.converged:
            yield OracleVerdict(
                "stage3_prices", closed, (res.p_N, res.p_NN), math.inf, grid.spacing, False,
                f"{tag} NonConvergence after {res.iterations} iterations",
            )
            continue
        yield _verdict("stage3_prices", closed, (res.p_N, res.p_NN), grid.spacing, f"{tag} iters={res.iterations}")
        fees = StrategyProfile(p_tilde=p, q_N=q_N, q_NN=q_NN, p_N=closed[0], p_NN=closed[1])
        gain = price_deviation_gain(params, fees, grid)
        yield _verdict("stage3_no_deviation", 0.0, max(0.0, *gain), 1e-12, f"{tag} gains={_fmt(gain)}")
        if deep:
            m = budget.m_users
            sim = simulated_deviation_check(params, fees, m, grid)
            # discrete shares are off by at most a couple of users
            tol = 4 * (abs(closed[0] - params.c) + abs(closed[1] - params.c) + abs(p) + 1) / m
            diag = (
                f"{tag} gains={_fmt((sim.gain_N, sim.gain_NN))} tried={sim.tried} "
                f"off_premise={sim.off_premise} off_premise_gain={_fmt(sim.off_premise_gain)}"
            )
            yield _verdict("stage3_simulated_payoffs", 0.0, sim.payoff_gap, tol, diag)
            yield _verdict("stage3_no_deviation_simulated", 0.0, max(0.0, sim.gain_N, sim.gain_NN), tol, diag)


def _verify_stage2(params: MarketParams, probes: Sequence[float], budget: Budget) -> Iterable[OracleVerdict]:
    grid = default_q_grid(params, budget.q_steps)
    for p in probes:
        tag = f"p_tilde={p:.6g}"
        try:
            res = cp_argmax_oracle(params, p, grid, grid)
        except OracleError as err:
            yield _failed("cp_best_response", None, err, tag)
            continue
        for branch in _branches_at(params, p):
            br = eq.branch_formula(params, branch, p)
            yield _verdict(
                "cp_best_response", (br.q_N_e, br.q_NN_e), (res.q_N, res.q_NN), res.spacing, f"{tag} branch={branch.value}"
            )
        bounds = coverage_bounds(params, p, res.q_NN - res.q_N)
        ok = lemma1_check(res, bounds, res.spacing)
        yield OracleVerdict("lemma1", True, ok, 0.0 if ok else 1.0, 0.0, ok, tag)
        br = eq.cp_best_response(params, p)
        best = eq.cp_objective(params, p, br.q_N_e, br.q_NN_e)
        for sid in (eq.CandidateSetId.Set1, eq.CandidateSetId.Set4):
            scan = candidate_set_scan(params, p, sid)
            val = -math.inf if scan is None else scan[1]
            excess = max(0.0, val - best)
            yield OracleVerdict(
                f"eliminated_{sid.value}", best, None if scan is None else val, excess, 1e-9, excess <= 1e-9, tag
            )


def _verify_stage1(params: MarketParams, probes: Sequence[float], budget: Budget, deep: bool) -> Iterable[OracleVerdict]:
    t = params.t
    grid = budget.p_tilde_grid or default_p_tilde_grid(params)
    tol = 1e-6 if deep else 1e-9
    try:
        res = transit_fee_argmax_oracle(params, grid, deep=deep, tol=tol)
    except OracleError as err:
        yield _failed("stage1_plateau", 9 * t / 8, err, f"grid=[{grid.lo:.6g}, {grid.hi:.6g}]")
    else:
        yield _verdict("stage1_plateau", 9 * t / 8, res.pi_NN, tol, f"argmax p_tilde={res.p_tilde:.6g}")
        expected = res.grid[res.grid >= 1.25 * t - 1e-12]
        mismatch = len(set(expected.tolist()) ^ set(res.argmax_set.tolist()))
        yield OracleVerdict(
            "stage1_argmax_set", len(expected), len(res.argmax_set), float(mismatch), 0.0, mismatch == 0,
            f"plateau starts at {1.25 * t:.6g}",
        )
    for p in probes:
        rep = eq.solve_spe(params, p)
        yield _verdict("stage1_payoff", eq.stage1_payoff(params, p), rep.payoffs.pi_NN, 1e-9, f"p_tilde={p:.6g}")
    lo, _, hi = eq.breakpoints(t)
    low, middle_lo, _ = eq.stage1_pieces(params, lo)
    _, middle_hi, high = eq.stage1_pieces(params, hi)
    yield _verdict("stage1_continuity", (low, high), (middle_lo, middle_hi), 1e-12, "middle piece at -+5t/4")
    for b,(left, right) in zip(eq.breakpoints(t), ((eq.Branch.B1, eq.Branch.B2), (eq.Branch.B2, eq.Branch.B3), (eq.Branch.B3, eq.Branch.B4))):
        dl = eq.branch_formula(params, left, b).delta_q_e
        dr = eq.branch_formula(params, right, b).delta_q_e
        yield _verdict("delta_q_continuity", dl, dr, 1e-12, f"p_tilde={b:.6g} {left.value}|{right.value}")


def verify(
    params: MarketParams,
    which: str = "all",
    budget: Optional[Budget] = None,
    seed: int = 0,
    deep: bool = False,
) -> List[OracleVerdict]:
    """Run the oracles for the chosen stage(s) and collect verdicts.

    Probes are a fixed set of transit fees (the three branch breakpoints,
    +-2t, +-t/2, 0) plus ``budget.n_random`` seeded draws. Oracle errors
    turn into failed verdicts; nothing is raised for a bad probe.
    """
    budget = budget or Budget()
    which = which.lower()
    stages = STAGES if which == "all" else (which,)
    unknown = set(stages) - set(STAGES)
    if unknown:
        raise ValueError(f"unknown stage selector {which!r}")
    rng = np.random.default_rng(seed)
    probes = probe_transit_fees(params, rng, budget.n_random)
    out: List[OracleVerdict] = []
    for stage in STAGES:
        if stage not in stages:
            continue
        if stage == "stage4":
            out.extend(_verify_stage4(params, probes, budget))
        elif stage == "stage3":
            out.extend(_verify_stage3(params, probes, budget, rng, deep))
        elif stage == "stage2":
            out.extend(_verify_stage2(params, probes, budget))
        else:
            out.extend(_verify_stage1(params, probes, budget, deep))
    return out
