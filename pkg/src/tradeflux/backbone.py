"""Statistically significant edge filtering for imbalance networks.

An edge carrying share p of a node's flux at degree k is scored by

    alpha(p, k) = (1 - p) ** (k - 1)

the probability that a uniformly random split of the node's flux over k
partners gives some partner a share of at least p. Small alpha means the
edge is too heavy to be a fluctuation of an even split. Each edge gets two
scores, one per endpoint, and survives a threshold if either endpoint
finds it significant; filtering with a stricter threshold always yields a
subset of a looser one.

Degree-1 endpoints carry their node's whole flux by construction, so
their score is fixed at 1 and they can only enter a backbone through the
opposite endpoint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import ImbalanceNetwork, write_graphml


def edge_significance_value(p: float, k: int) -> float:
    """Null probability that a degree-k node gives some partner share >= p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"share must lie in [0, 1], got {p}")
    if k < 1:
        raise ValueError("degree must be >= 1")
    if k == 1:
        return 1.0
    return float((1.0 - p) ** (k - 1))


def _edge_alphas(net: ImbalanceNetwork) -> tuple[np.ndarray, np.ndarray]:
    """Per-edge significance at the source (out-share) and target (in-share)."""
    p_out = np.clip(net.weight / net.s_out[net.src], 0.0, 1.0)
    p_in = np.clip(net.weight / net.s_in[net.dst], 0.0, 1.0)
    k_out = net.k_out[net.src]
    k_in = net.k_in[net.dst]
    with np.errstate(divide="ignore"):
        a_src = np.where(k_out == 1, 1.0, (1.0 - p_out) ** (k_out - 1))
        a_dst = np.where(k_in == 1, 1.0, (1.0 - p_in) ** (k_in - 1))
    return a_src, a_dst


@dataclass(frozen=True)
class EdgeSignificance:
    """One edge with its endpoint significance scores."""

    source: str
    target: str
    weight: float
    alpha_at_source: float
    alpha_at_target: float


@dataclass(frozen=True)
class BackboneNetwork:
    """Edges of ``base`` whose best endpoint score beats ``threshold``."""

    base: ImbalanceNetwork
    threshold: float
    edge_index: np.ndarray
    alpha_at_source: np.ndarray
    alpha_at_target: np.ndarray

    @property
    def n_edges(self) -> int:
        return int(self.edge_index.size)

    @property
    def node_indices(self) -> np.ndarray:
        """Indices of base nodes incident to at least one retained edge."""
        kept = np.concatenate(
            [self.base.src[self.edge_index], self.base.dst[self.edge_index]]
        )
        return np.unique(kept)

    def edges(self) -> list[EdgeSignificance]:
        countries = self.base.countries
        return [
            EdgeSignificance(
                source=countries[self.base.src[e]],
                target=countries[self.base.dst[e]],
                weight=float(self.base.weight[e]),
                alpha_at_source=float(a_s),
                alpha_at_target=float(a_t),
            )
            for e, a_s, a_t in zip(
                self.edge_index, self.alpha_at_source, self.alpha_at_target
            )
        ]

    def as_network(self) -> ImbalanceNetwork:
        """The retained edges as a standalone network on the full node set."""
        return ImbalanceNetwork(
            self.base.countries,
            self.base.src[self.edge_index],
            self.base.dst[self.edge_index],
            self.base.weight[self.edge_index],
            validate=False,
        )


def extract_backbone(net: ImbalanceNetwork, alpha: float) -> BackboneNetwork:
    """Keep every edge significant at level ``alpha`` for either endpoint.

    Retention is strict (score < alpha), so alpha = 1 keeps exactly the
    edges with at least one endpoint of degree >= 2 and a nonzero share
    margin, and thresholds nest monotonically.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    a_src, a_dst = _edge_alphas(net)
    kept = np.flatnonzero((a_src < alpha) | (a_dst < alpha))
    return BackboneNetwork(
        base=net,
        threshold=alpha,
        edge_index=kept,
        alpha_at_source=a_src[kept],
        alpha_at_target=a_dst[kept],
    )


@dataclass(frozen=True)
class BackboneStats:
    """Share of base flux, active nodes, and edges surviving a threshold."""

    alpha: float
    pct_flux: float
    pct_nodes: float
    pct_edges: float


def backbone_stats(backbone: BackboneNetwork) -> BackboneStats:
    """Percentages retained relative to the base network.

    The node denominator counts base nodes that touch at least one base
    edge, so isolated countries dilute neither side of the ratio.
    """
    base = backbone.base
    if base.n_edges == 0:
        raise ValueError("base network has no edges")
    base_nodes = np.unique(np.concatenate([base.src, base.dst])).size
    kept_w = float(base.weight[backbone.edge_index].sum())
    return BackboneStats(
        alpha=backbone.threshold,
        pct_flux=100.0 * kept_w / float(base.weight.sum()),
        pct_nodes=100.0 * backbone.node_indices.size / base_nodes,
        pct_edges=100.0 * backbone.n_edges / base.n_edges,
    )


def backbone_sweep(
    net: ImbalanceNetwork, alphas
) -> list[tuple[BackboneNetwork, BackboneStats]]:
    """Extract backbones for several thresholds over shared edge scores.

    ``alphas`` must be distinct values in (0, 1]; they are processed in
    the order given.
    """
    alphas = [float(a) for a in alphas]
    if not alphas:
        raise ValueError("alphas must be non-empty")
    if len(set(alphas)) != len(alphas):
        raise ValueError("alphas must be distinct")
    for a in alphas:
        if not 0.0 < a <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {a}")
    a_src, a_dst = _edge_alphas(net)
    out = []
    for a in alphas:
        kept = np.flatnonzero((a_src < a) | (a_dst < a))
        bb = BackboneNetwork(
            base=net,
            threshold=a,
            edge_index=kept,
            alpha_at_source=a_src[kept],
            alpha_at_target=a_dst[kept],
        )
        out.append((bb, backbone_stats(bb)))
    return out


def connected_components(
    net: ImbalanceNetwork, include_isolated: bool = False
) -> list[list[int]]:
    """Weakly connected components, largest first.

    Nodes without edges are skipped unless ``include_isolated`` is set,
    in which case they appear as trailing singletons.
    """
    parent = list(range(net.n_nodes))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j, _ in net.iter_edges():
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj

    groups: dict[int, list[int]] = {}
    active = net.k_in + net.k_out > 0
    for node in range(net.n_nodes):
        if active[node] or include_isolated:
            groups.setdefault(find(node), []).append(node)
    comps = sorted(groups.values(), key=lambda g: (-len(g), g[0]))
    return comps


def write_backbone_tsv(backbone: BackboneNetwork, stream) -> None:
    """Tab-separated retained edges with both endpoint scores."""
    close = False
    if isinstance(stream, str):
        stream = open(stream, "w", encoding="utf-8", newline="\n")
        close = True
    try:
        stream.write("src\tdst\tweight\talpha_at_source\talpha_at_target\n")
        for e in backbone.edges():
            stream.write(
                f"{e.source}\t{e.target}\t{e.weight!r}\t"
                f"{e.alpha_at_source!r}\t{e.alpha_at_target!r}\n"
            )
    finally:
        if close:
            stream.close()


def write_backbone_graphml(backbone: BackboneNetwork, stream) -> None:
    """GraphML of the retained edges carrying both endpoint scores.

    Retained edges keep their base order, which is already canonical, so
    the score arrays align with the rebuilt network's edge order.
    """
    write_graphml(
        backbone.as_network(),
        stream,
        edge_attrs={
            "alpha_at_source": backbone.alpha_at_source,
            "alpha_at_target": backbone.alpha_at_target,
        },
    )


def write_stats_csv(stats: list[BackboneStats], stream) -> None:
    close = False
    if isinstance(stream, str):
        stream = open(stream, "w", encoding="utf-8", newline="\n")
        close = True
    try:
        stream.write("alpha,pct_flux,pct_nodes,pct_edges\n")
        for s in stats:
            stream.write(f"{s.alpha!r},{s.pct_flux!r},{s.pct_nodes!r},{s.pct_edges!r}\n")
    finally:
        if close:
            stream.close()
