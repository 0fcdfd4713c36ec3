"""Absorbing random walks tracing where net money flows end up.

A unit of currency injected at a net consumer (a node spending more than
it earns) wanders along edges: from node v it hops to partner u with
probability proportional to the edge weight v->u. On arriving at a net
producer it is absorbed with probability delta_s / s_in, the fraction of
the producer's income it keeps rather than re-spends; otherwise it keeps
moving. Absorption shares e[i, j] say how much of consumer i's deficit is
ultimately banked by producer j.

The time-reversed question (where did producer j's surplus originate?) is
the same walk on the reversed network: flipping every edge swaps incoming
and outgoing strengths, so net producers become the walk's starting
points and net consumers its absorbers. Both directions are exposed as
Monte Carlo estimators and as exact linear solves; the two satisfy a
detailed-balance identity and each reconstructs the opposite side's
imbalances, which is what the test suite leans on.

Every absorbing system here terminates with probability one: accounts are
derived from the edge list, so any set of nodes closed under outgoing
edges has non-negative total imbalance and, once it contains a net
consumer, must also contain a net producer. A walker can therefore never
be trapped in a sink-free region, and dead-end nodes (no outgoing edges)
are always full absorbers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .errors import NoConvergenceError
from .network import ImbalanceNetwork, NodeAccount

DIRECTIONS = ("forward", "backward")

#: Dense linear solves are used up to this many participating nodes.
DENSE_NODE_LIMIT = 2000

#: Residual tolerance for the iterative solver, relative to the RHS norm.
ITERATIVE_RTOL = 1e-12

#: Fraction of walkers allowed to hit the step cap before a warning is issued.
NON_ABSORBED_WARNING = 0.01


def absorption_probability(account: NodeAccount, direction: str) -> float:
    """Chance a walker is absorbed on arrival at this node.

    Forward walkers are absorbed by net producers with probability
    delta_s / s_in; backward walkers by net consumers with probability
    |delta_s| / s_out. Everyone else passes walkers through.
    """
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    if direction == "forward":
        if account.delta_s <= 0:
            return 0.0
        if account.s_in <= 0:
            raise ValueError(f"{account.country}: positive imbalance with no income")
        return account.delta_s / account.s_in
    if account.delta_s >= 0:
        return 0.0
    if account.s_out <= 0:
        raise ValueError(f"{account.country}: negative imbalance with no spending")
    return -account.delta_s / account.s_out


@dataclass(frozen=True)
class WalkConfig:
    """Monte Carlo parameters; ``max_steps`` caps hops per walker."""

    n_walkers: int = 1_000_000
    seed: int = 0
    max_steps: int = 1_000_000

    def __post_init__(self):
        if self.n_walkers < 1:
            raise ValueError("n_walkers must be >= 1")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass(frozen=True)
class AbsorptionMatrix:
    """Absorption shares for a set of start nodes.

    ``shares[i, j]`` is the probability that a walker launched at
    ``starts[i]`` is absorbed at ``targets[j]``; rows sum to one minus
    ``non_absorbed[i]``. ``method`` records how the numbers were produced
    (``monte-carlo``, ``dense``, or ``iterative``).
    """

    direction: str
    starts: tuple[str, ...]
    targets: tuple[str, ...]
    shares: np.ndarray
    non_absorbed: np.ndarray
    method: str
    n_walkers: int | None
    warnings: tuple[str, ...]

    def share(self, start: str, target: str) -> float:
        return float(
            self.shares[self.starts.index(start), self.targets.index(target)]
        )


def _absorb_vector(work: ImbalanceNetwork) -> np.ndarray:
    # forward-sense absorption on `work`; a node with delta_s > 0 has s_in > 0
    denom = np.where(work.s_in > 0, work.s_in, 1.0)
    return np.where(work.delta_s > 0, work.delta_s / denom, 0.0)


def _hop_table(work: ImbalanceNetwork) -> np.ndarray:
    """Concatenated per-node cumulative hop shares, offset by node index.

    Entry e of the table is ``src[e] + cum_share`` where cum_share runs up
    a node's outgoing edges in canonical order and is clamped to exactly
    1.0 at the last edge. A walker at node v with uniform draw u lands on
    edge ``searchsorted(table, v + u, side="right")``: one vectorised
    lookup replaces per-node distributions.
    """
    shares = work.weight / work.s_out[work.src]
    cum = np.cumsum(shares)
    ptr = work._out_ptr
    before_row = np.concatenate([[0.0], cum])[ptr[work.src]]
    row_cum = cum - before_row
    last = ptr[1:] - 1
    row_cum[last[ptr[1:] > ptr[:-1]]] = 1.0
    return work.src + row_cum


def _mc_run(
    work: ImbalanceNetwork, start: int, config: WalkConfig
) -> tuple[np.ndarray, float]:
    """Lock-step walker ensemble; returns absorption counts and loss rate."""
    rng = np.random.default_rng(config.seed)
    table = _hop_table(work)
    absorb_p = _absorb_vector(work)

    cur = np.full(config.n_walkers, start, dtype=np.int64)
    alive = np.arange(config.n_walkers)
    absorbed_at = np.full(config.n_walkers, -1, dtype=np.int64)

    for _ in range(config.max_steps):
        if alive.size == 0:
            break
        jump = np.searchsorted(table, cur[alive] + rng.random(alive.size), side="right")
        landed = work.dst[jump]
        cur[alive] = landed
        hit = rng.random(alive.size) < absorb_p[landed]
        absorbed_at[alive[hit]] = landed[hit]
        alive = alive[~hit]

    counts = np.bincount(absorbed_at[absorbed_at >= 0], minlength=work.n_nodes)
    return counts, alive.size / config.n_walkers


def _mc_matrix(
    net: ImbalanceNetwork, start, direction: str, config: WalkConfig
) -> AbsorptionMatrix:
    if isinstance(start, str):
        if start not in net.index:
            raise KeyError(f"unknown country {start!r}")
        start = net.index[start]
    start = int(start)
    if direction == "forward":
        if net.delta_s[start] >= 0:
            raise ValueError(
                f"forward walks start at a net consumer; "
                f"{net.countries[start]} has delta_s = {net.delta_s[start]!r}"
            )
        work = net
    else:
        if net.delta_s[start] <= 0:
            raise ValueError(
                f"backward walks start at a net producer; "
                f"{net.countries[start]} has delta_s = {net.delta_s[start]!r}"
            )
        work = net.reverse()

    sinks = np.flatnonzero(work.delta_s > 0)
    counts, lost = _mc_run(work, start, config)
    shares = counts[sinks][None, :] / config.n_walkers
    code = net.countries[start]
    warnings = ()
    if lost > NON_ABSORBED_WARNING:
        warnings = (
            f"{code}: {lost:.4f} of walkers were not absorbed "
            f"within {config.max_steps} steps",
        )
    return AbsorptionMatrix(
        direction=direction,
        starts=(code,),
        targets=tuple(net.countries[i] for i in sinks),
        shares=shares,
        non_absorbed=np.array([lost]),
        method="monte-carlo",
        n_walkers=config.n_walkers,
        warnings=warnings,
    )


def forward_walk_mc(
    net: ImbalanceNetwork, start, config: WalkConfig | None = None
) -> AbsorptionMatrix:
    """Estimate where one net consumer's deficit ends up, by simulation."""
    return _mc_matrix(net, start, "forward", config or WalkConfig())


def backward_walk_mc(
    net: ImbalanceNetwork, start, config: WalkConfig | None = None
) -> AbsorptionMatrix:
    """Estimate where one net producer's surplus came from, by simulation."""
    return _mc_matrix(net, start, "backward", config or WalkConfig())


def _reaches(work: ImbalanceNetwork, seed_mask: np.ndarray) -> np.ndarray:
    """Mask of nodes from which some seed node is reachable."""
    reach = seed_mask.copy()
    stack = list(np.flatnonzero(seed_mask))
    while stack:
        v = stack.pop()
        srcs, _ = work.in_edges(v)
        for u in srcs:
            if not reach[u]:
                reach[u] = True
                stack.append(int(u))
    return reach


def _solve_iterative(A, B: np.ndarray) -> np.ndarray:
    A = scipy.sparse.csc_matrix(A)
    F = np.empty_like(B)
    for t in range(B.shape[1]):
        b = B[:, t]
        try:
            x, info = scipy.sparse.linalg.lgmres(
                A, b, rtol=ITERATIVE_RTOL, atol=ITERATIVE_RTOL * max(np.linalg.norm(b), 1e-300)
            )
        except TypeError:  # scipy < 1.12 spells the kwarg "tol"
            x, info = scipy.sparse.linalg.lgmres(
                A, b, tol=ITERATIVE_RTOL, atol=ITERATIVE_RTOL * max(np.linalg.norm(b), 1e-300)
            )
        if info != 0:
            raise NoConvergenceError(
                f"iterative solve did not converge for absorbing column {t} (info={info})"
            )
        residual = np.linalg.norm(A @ x - b)
        if residual > 1e-9 * max(np.linalg.norm(b), 1.0):
            raise NoConvergenceError(
                f"iterative solve left residual {residual:.3e} on column {t}"
            )
        F[:, t] = x
    return F


def exact_absorption(
    net: ImbalanceNetwork, direction: str = "forward", method: str = "auto"
) -> AbsorptionMatrix:
    """Absorption shares for every start node by solving the hitting system.

    With hop matrix P and per-node absorption vector a, the absorbed-at-t
    probabilities f satisfy f = P (a 1_t + (1 - a) f); the solve inverts
    ``I - P diag(1 - a)`` restricted to nodes that can reach an absorber.
    ``method`` is ``dense`` (LAPACK), ``iterative`` (sparse LGMRES per
    column), or ``auto`` to pick by system size.
    """
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    if method not in ("auto", "dense", "iterative"):
        raise ValueError(f"unknown method {method!r}")
    work = net if direction == "forward" else net.reverse()

    starts = np.flatnonzero(work.delta_s < 0)
    sinks = np.flatnonzero(work.delta_s > 0)
    if starts.size == 0 or sinks.size == 0:
        raise ValueError(
            "absorption needs at least one net consumer and one net producer"
        )
    total = float(work.weight.sum())
    if abs(float(work.delta_s.sum())) > 1e-9 * total:
        raise ValueError("node imbalances do not sum to zero; accounts are inconsistent")

    absorb_p = _absorb_vector(work)
    reach = _reaches(work, work.delta_s > 0)
    trapped = np.flatnonzero(~reach & (work.k_in + work.k_out > 0))
    if not reach[starts].all():
        bad = [work.countries[i] for i in starts if not reach[i]]
        raise NoConvergenceError(
            f"start nodes cannot reach any absorber: {', '.join(bad)}"
        )
    warnings = ()
    if trapped.size:
        names = ", ".join(work.countries[i] for i in trapped[:8])
        warnings = (
            f"excluded {trapped.size} node(s) unreachable from any start "
            f"and unable to reach an absorber: {names}",
        )

    nodes = np.flatnonzero(reach)
    m = nodes.size
    pos = np.full(work.n_nodes, -1, dtype=np.int64)
    pos[nodes] = np.arange(m)
    sink_pos = np.full(work.n_nodes, -1, dtype=np.int64)
    sink_pos[sinks] = np.arange(sinks.size)

    live = reach[work.src]
    es, ed = work.src[live], work.dst[live]
    hop = work.weight[live] / work.s_out[es]
    # hop rows must be proper distributions for the system to be absorbing
    row_sum = np.bincount(es, weights=hop, minlength=work.n_nodes)
    active = work.k_out > 0
    if np.any(np.abs(row_sum[active & reach] - 1.0) > 1e-9):
        raise ValueError("outgoing hop probabilities do not sum to one")

    into = reach[ed]
    rows = pos[es[into]]
    cols = pos[ed[into]]
    vals = hop[into] * (1.0 - absorb_p[ed[into]])

    B = np.zeros((m, sinks.size))
    hits = sink_pos[ed] >= 0
    np.add.at(B, (pos[es[hits]], sink_pos[ed[hits]]), hop[hits] * absorb_p[ed[hits]])

    if method == "auto":
        method = "dense" if m <= DENSE_NODE_LIMIT else "iterative"
    if method == "dense":
        A = np.eye(m)
        A[rows, cols] -= vals
        try:
            F = np.linalg.solve(A, B)
        except np.linalg.LinAlgError as exc:
            raise NoConvergenceError(f"absorbing system is singular: {exc}") from exc
    else:
        M = scipy.sparse.coo_matrix((vals, (rows, cols)), shape=(m, m))
        A = scipy.sparse.identity(m, format="csc") - M.tocsc()
        F = _solve_iterative(A, B)

    shares = np.clip(F[pos[starts], :], 0.0, 1.0)
    non_absorbed = np.maximum(1.0 - shares.sum(axis=1), 0.0)
    return AbsorptionMatrix(
        direction=direction,
        starts=tuple(work.countries[i] for i in starts),
        targets=tuple(work.countries[i] for i in sinks),
        shares=shares,
        non_absorbed=non_absorbed,
        method=method,
        n_walkers=None,
        warnings=warnings,
    )


def detailed_balance_check(
    forward: AbsorptionMatrix,
    backward: AbsorptionMatrix,
    accounts: list[NodeAccount],
) -> float:
    """Largest violation of |delta_i| e[i, j] == delta_j g[j, i], in flux units.

    ``forward`` and ``backward`` must cover the same consumers and
    producers; a perfect pair of solutions moves the same money i -> j
    whichever end of the pipe you watch.
    """
    if forward.direction != "forward" or backward.direction != "backward":
        raise ValueError("expected one forward and one backward matrix, in that order")
    if set(forward.starts) != set(backward.targets) or set(forward.targets) != set(
        backward.starts
    ):
        raise ValueError("matrices cover different consumer/producer sets")
    delta = {a.country: a.delta_s for a in accounts}
    missing = (set(forward.starts) | set(forward.targets)) - set(delta)
    if missing:
        raise ValueError(f"accounts missing for: {', '.join(sorted(missing))}")

    row_perm = [backward.starts.index(t) for t in forward.targets]
    col_perm = [backward.targets.index(s) for s in forward.starts]
    G = backward.shares[np.ix_(row_perm, col_perm)]
    d_src = np.array([delta[c] for c in forward.starts])
    d_snk = np.array([delta[c] for c in forward.targets])
    lhs = np.abs(d_src)[:, None] * forward.shares
    rhs = (d_snk[:, None] * G).T
    if lhs.size == 0:
        return 0.0
    return float(np.max(np.abs(lhs - rhs)))


def imbalance_reconstruction(
    matrix: AbsorptionMatrix, accounts: list[NodeAccount]
) -> dict[str, float]:
    """Rebuild each target's imbalance from absorption shares.

    A forward matrix over all net consumers reconstructs every producer's
    surplus as sum_i e[i, j] |delta_i|; a backward matrix over all
    producers reconstructs every consumer's deficit. Partial coverage of
    the start side would silently underestimate, so it is an error.
    """
    delta = {a.country: a.delta_s for a in accounts}
    if matrix.direction == "forward":
        required = {c for c, d in delta.items() if d < 0}
    else:
        required = {c for c, d in delta.items() if d > 0}
    missing = required - set(matrix.starts)
    if missing:
        raise ValueError(
            f"matrix must cover every start node; missing: {', '.join(sorted(missing))}"
        )
    mass = np.array([abs(delta[c]) for c in matrix.starts])
    totals = mass @ matrix.shares
    return {c: float(t) for c, t in zip(matrix.targets, totals)}


@dataclass(frozen=True)
class PartnerRank:
    """One row of a who-absorbs-whose-money ranking."""

    rank: int
    partner: str
    global_share_pct: float
    local_share_pct: float
    direct: bool


def rank_partners(
    net: ImbalanceNetwork, matrix: AbsorptionMatrix, start: str, top: int = 10
) -> list[PartnerRank]:
    """Top absorption partners of ``start``, with the direct-edge comparison.

    ``global_share_pct`` is the walk's absorption share; ``local_share_pct``
    is the weight fraction of the direct edge between the two countries
    (zero, with ``direct=False``, when no such edge exists). Partners the
    walk never reaches are omitted; ties break alphabetically.
    """
    if top < 1:
        raise ValueError("top must be >= 1")
    if start not in matrix.starts:
        raise ValueError(f"{start!r} is not a start node of this matrix")
    row = matrix.shares[matrix.starts.index(start)]
    s_idx = net.index[start]
    local_total = (
        net.s_out[s_idx] if matrix.direction == "forward" else net.s_in[s_idx]
    )
    ranked = sorted(
        (
            (float(share), partner)
            for share, partner in zip(row, matrix.targets)
            if share > 0
        ),
        key=lambda t: (-t[0], t[1]),
    )
    out = []
    for rank, (share, partner) in enumerate(ranked[:top], start=1):
        p_idx = net.index[partner]
        if matrix.direction == "forward":
            w = net.weight_between(s_idx, p_idx)
        else:
            w = net.weight_between(p_idx, s_idx)
        out.append(
            PartnerRank(
                rank=rank,
                partner=partner,
                global_share_pct=100.0 * share,
                local_share_pct=float(100.0 * w / local_total) if local_total > 0 else 0.0,
                direct=w > 0,
            )
        )
    return out


def write_absorption_csv(matrix: AbsorptionMatrix, stream) -> None:
    """One row per (start, target) cell: ``start,end,share,non_absorbed``."""
    close = False
    if isinstance(stream, str):
        stream = open(stream, "w", encoding="utf-8", newline="\n")
        close = True
    try:
        stream.write("start,end,share,non_absorbed\n")
        for i, start in enumerate(matrix.starts):
            lost = float(matrix.non_absorbed[i])
            for j, target in enumerate(matrix.targets):
                stream.write(f"{start},{target},{float(matrix.shares[i, j])!r},{lost!r}\n")
    finally:
        if close:
            stream.close()


def write_diagnostics_json(matrix: AbsorptionMatrix, stream) -> None:
    """Run metadata: direction, method, walker count, losses, warnings."""
    close = False
    if isinstance(stream, str):
        stream = open(stream, "w", encoding="utf-8", newline="\n")
        close = True
    try:
        json.dump(
            {
                "direction": matrix.direction,
                "method": matrix.method,
                "n_walkers": matrix.n_walkers,
                "n_starts": len(matrix.starts),
                "n_targets": len(matrix.targets),
                "non_absorbed": {
                    c: float(v) for c, v in zip(matrix.starts, matrix.non_absorbed)
                },
                "warnings": list(matrix.warnings),
            },
            stream,
            indent=2,
        )
        stream.write("\n")
    finally:
        if close:
            stream.close()


def write_ranking_csv(rows: list[PartnerRank], stream) -> None:
    close = False
    if isinstance(stream, str):
        stream = open(stream, "w", encoding="utf-8", newline="\n")
        close = True
    try:
        stream.write("rank,partner,global_share_pct,local_share_pct,direct\n")
        for r in rows:
            stream.write(
                f"{r.rank},{r.partner},{r.global_share_pct!r},"
                f"{r.local_share_pct!r},{'true' if r.direct else 'false'}\n"
            )
    finally:
        if close:
            stream.close()
