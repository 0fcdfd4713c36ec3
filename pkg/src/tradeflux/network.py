"""Directed imbalance networks and per-node flux accounts.

Every unordered country pair with unbalanced bilateral trade contributes one
directed edge pointing from the deficit country to the surplus country,
weighted by the absolute net flow between them. The resulting graph is a
closed money-flow system: each edge adds the same amount to one node's
incoming strength and another's outgoing strength, so the total of all
node imbalances is zero.

Networks are immutable after construction; all account computations are
read-only and safe to share across threads.
"""

from __future__ import annotations

import io
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass

import numpy as np

#: Relative tolerance below which a pair's net flow is treated as exactly
#: balanced (no edge), absorbing float noise from reconciliation arithmetic.
ZERO_IMBALANCE_RTOL = 1e-12


class ImbalanceNetwork:
    """Immutable directed weighted graph over a fixed country list.

    Edges are stored as parallel arrays ``src``, ``dst``, ``weight`` in
    canonical order (sorted by source index, then target index). Per-node
    degrees and strengths are precomputed:

    - ``k_in`` / ``k_out``: number of incoming / outgoing edges,
    - ``s_in`` / ``s_out``: summed incoming / outgoing weight,
    - ``delta_s``: ``s_in - s_out``, the node's net imbalance.

    Isolated countries stay in ``countries`` with all-zero accounts.
    At most one direction may exist per unordered pair, weights must be
    strictly positive and finite, and self-loops are rejected.
    """

    def __init__(self, countries, src, dst, weight, validate: bool = True):
        self.countries: tuple[str, ...] = tuple(countries)
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        weight = np.asarray(weight, dtype=float)
        order = np.lexsort((dst, src))
        self.src = src[order]
        self.dst = dst[order]
        self.weight = weight[order]
        self.index = {code: i for i, code in enumerate(self.countries)}
        if len(self.index) != len(self.countries):
            raise ValueError("duplicate country codes")
        if validate:
            self._check_invariants()

        n = len(self.countries)
        self.k_in = np.bincount(self.dst, minlength=n)
        self.k_out = np.bincount(self.src, minlength=n)
        self.s_in = np.bincount(self.dst, weights=self.weight, minlength=n)
        self.s_out = np.bincount(self.src, weights=self.weight, minlength=n)
        self.delta_s = self.s_in - self.s_out

        # CSR-style adjacency. Outgoing edges are contiguous in canonical
        # order; incoming edges are indexed through a stable permutation.
        self._out_ptr = np.searchsorted(self.src, np.arange(n + 1))
        self._in_order = np.argsort(self.dst, kind="stable")
        self._in_ptr = np.searchsorted(self.dst[self._in_order], np.arange(n + 1))
        self._pair_weight = {
            (int(i), int(j)): float(w)
            for i, j, w in zip(self.src, self.dst, self.weight)
        }

    def _check_invariants(self):
        n = len(self.countries)
        if self.src.size:
            if self.src.min() < 0 or self.src.max() >= n:
                raise ValueError("edge source index out of range")
            if self.dst.min() < 0 or self.dst.max() >= n:
                raise ValueError("edge target index out of range")
        if np.any(self.src == self.dst):
            raise ValueError("self-loops are not allowed")
        if not np.all(np.isfinite(self.weight)) or np.any(self.weight <= 0):
            raise ValueError("edge weights must be strictly positive and finite")
        seen = set()
        for i, j in zip(self.src, self.dst):
            pair = (int(i), int(j))
            if pair in seen:
                raise ValueError(f"duplicate edge {self.countries[i]}->{self.countries[j]}")
            if (pair[1], pair[0]) in seen:
                raise ValueError(
                    f"reciprocal edges for pair {self.countries[i]}/{self.countries[j]}: "
                    "an imbalance network carries at most one direction per pair"
                )
            seen.add(pair)

    @classmethod
    def from_edges(cls, edges, countries=None) -> "ImbalanceNetwork":
        """Build from ``(source_code, target_code, weight)`` triples.

        ``countries`` may list extra (isolated) nodes; by default the node
        set is the sorted set of codes appearing in the edges.
        """
        edges = list(edges)
        if countries is None:
            countries = sorted({c for s, d, _ in edges for c in (s, d)})
        index = {code: i for i, code in enumerate(countries)}
        src = [index[s] for s, _, _ in edges]
        dst = [index[d] for _, d, _ in edges]
        weight = [w for _, _, w in edges]
        return cls(countries, src, dst, weight)

    @property
    def n_nodes(self) -> int:
        return len(self.countries)

    @property
    def n_edges(self) -> int:
        return int(self.src.size)

    def iter_edges(self):
        """Yield ``(source_index, target_index, weight)`` in canonical order."""
        for i, j, w in zip(self.src, self.dst, self.weight):
            yield int(i), int(j), float(w)

    def out_edges(self, node: int):
        """Target indices and weights of ``node``'s outgoing edges."""
        lo, hi = self._out_ptr[node], self._out_ptr[node + 1]
        return self.dst[lo:hi], self.weight[lo:hi]

    def in_edges(self, node: int):
        """Source indices and weights of ``node``'s incoming edges."""
        lo, hi = self._in_ptr[node], self._in_ptr[node + 1]
        sel = self._in_order[lo:hi]
        return self.src[sel], self.weight[sel]

    def weight_between(self, source: int, target: int) -> float:
        """Edge weight for source->target, or 0.0 when absent."""
        return self._pair_weight.get((source, target), 0.0)

    def reverse(self) -> "ImbalanceNetwork":
        """The same network with every edge flipped (weights kept)."""
        return ImbalanceNetwork(
            self.countries, self.dst, self.src, self.weight, validate=False
        )


@dataclass(frozen=True)
class NodeAccount:
    """Degrees, strengths, and net imbalance of one country."""

    country: str
    k_in: int
    k_out: int
    s_in: float
    s_out: float
    delta_s: float

    @property
    def classification(self) -> str:
        """``sink`` (net producer), ``source`` (net consumer), or ``neutral``."""
        if self.delta_s > 0:
            return "sink"
        if self.delta_s < 0:
            return "source"
        return "neutral"


def build_imbalance_network(tm) -> ImbalanceNetwork:
    """Construct the imbalance network from a reconciled export matrix.

    For each pair the net flow is ``exports[i, j] - exports[j, i]``; the pair
    contributes a single edge from the deficit side to the surplus side
    carrying the absolute difference, or no edge when balanced within
    ``ZERO_IMBALANCE_RTOL`` relative to the larger gross flow.
    """
    exports = np.asarray(tm.exports, dtype=float)
    n = len(tm.countries)
    iu, ju = np.triu_indices(n, k=1)
    e_ij = exports[iu, ju]
    e_ji = exports[ju, iu]
    net_flow = e_ij - e_ji
    tol = ZERO_IMBALANCE_RTOL * np.maximum(e_ij, e_ji)

    # net_flow > 0: i has the surplus of the pair, so money flows j -> i.
    surplus_i = net_flow > tol
    surplus_j = net_flow < -tol
    src = np.concatenate([ju[surplus_i], iu[surplus_j]])
    dst = np.concatenate([iu[surplus_i], ju[surplus_j]])
    weight = np.concatenate([net_flow[surplus_i], -net_flow[surplus_j]])
    return ImbalanceNetwork(tm.countries, src, dst, weight, validate=False)


def node_accounts(net: ImbalanceNetwork) -> list[NodeAccount]:
    """Per-country accounts in country order."""
    return [
        NodeAccount(
            country=code,
            k_in=int(net.k_in[i]),
            k_out=int(net.k_out[i]),
            s_in=float(net.s_in[i]),
            s_out=float(net.s_out[i]),
            delta_s=float(net.delta_s[i]),
        )
        for i, code in enumerate(net.countries)
    ]


def global_balance_residual(accounts: list[NodeAccount]) -> float:
    """Sum of all net imbalances; zero up to rounding for a closed system."""
    return float(sum(account.delta_s for account in accounts))


def total_flux(net: ImbalanceNetwork) -> float:
    """Sum of all edge weights."""
    return float(net.weight.sum())


@dataclass(frozen=True)
class FluxHistogram:
    """Edge-weight histogram; ``bin_edges`` has one more entry than ``counts``."""

    bin_edges: np.ndarray
    counts: np.ndarray
    log_scale: bool


def flux_histogram(
    net: ImbalanceNetwork, n_bins: int, log_scale: bool = True
) -> FluxHistogram:
    """Histogram of edge weights, log-spaced bins by default.

    Heavy-tailed flux distributions span several orders of magnitude, so
    log-spaced bins are the useful default. An empty network yields an
    empty histogram.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    if net.n_edges == 0:
        return FluxHistogram(np.array([]), np.array([], dtype=int), log_scale)
    w = net.weight
    lo, hi = float(w.min()), float(w.max())
    if lo == hi:
        lo, hi = lo * 0.995, hi * 1.005
    if log_scale:
        edges = np.logspace(math.log10(lo), math.log10(hi), n_bins + 1)
    else:
        edges = np.linspace(lo, hi, n_bins + 1)
    counts, edges = np.histogram(w, bins=edges)
    return FluxHistogram(edges, counts, log_scale)


# ---------------------------------------------------------------------------
# Graph file formats
# ---------------------------------------------------------------------------


def write_edge_list(net: ImbalanceNetwork, stream) -> None:
    """Write the tab-separated edge list ``src dst weight`` with a header."""
    close = False
    if isinstance(stream, str):
        stream = open(stream, "w", encoding="utf-8", newline="\n")
        close = True
    try:
        stream.write("src\tdst\tweight\n")
        for i, j, w in net.iter_edges():
            stream.write(f"{net.countries[i]}\t{net.countries[j]}\t{w!r}\n")
    finally:
        if close:
            stream.close()


def read_edge_list(stream) -> ImbalanceNetwork:
    """Parse an edge-list file (tab- or space-separated, optional header).

    Node identity is recovered from the edge endpoints; countries isolated
    in the original network are not representable in this format.
    """
    close = False
    if isinstance(stream, str) and "\n" not in stream:
        stream = open(stream, "r", encoding="utf-8")
        close = True
    elif isinstance(stream, str):
        stream = io.StringIO(stream)
    try:
        edges = []
        for line_no, line in enumerate(stream, start=1):
            parts = line.split()
            if not parts or line.lstrip().startswith("#"):
                continue
            if len(parts) != 3:
                raise ValueError(f"line {line_no}: expected 'src dst weight'")
            try:
                w = float(parts[2])
            except ValueError:
                if line_no == 1:
                    continue  # header row
                raise ValueError(f"line {line_no}: bad weight {parts[2]!r}") from None
            edges.append((parts[0], parts[1], w))
        return ImbalanceNetwork.from_edges(edges)
    finally:
        if close:
            stream.close()


_GRAPHML_NS = "http://graphml.graphdrawing.org/xmlns"


def write_graphml(
    net: ImbalanceNetwork, stream, edge_attrs: dict[str, np.ndarray] | None = None
) -> None:
    """Write GraphML with edge weights and per-node strength attributes.

    ``edge_attrs`` maps extra attribute names to per-edge value arrays in
    canonical edge order (used for backbone significance exports).
    """
    ET.register_namespace("", _GRAPHML_NS)
    root = ET.Element(f"{{{_GRAPHML_NS}}}graphml")
    node_attrs = ("s_in", "s_out", "delta_s")
    keys = {}
    for name in node_attrs:
        key_id = f"n_{name}"
        ET.SubElement(
            root,
            f"{{{_GRAPHML_NS}}}key",
            id=key_id,
            attrib={"for": "node", "attr.name": name, "attr.type": "double"},
        )
        keys[name] = key_id
    edge_names = ("weight",) + tuple(edge_attrs or ())
    for name in edge_names:
        key_id = f"e_{name}"
        ET.SubElement(
            root,
            f"{{{_GRAPHML_NS}}}key",
            id=key_id,
            attrib={"for": "edge", "attr.name": name, "attr.type": "double"},
        )
        keys[name] = key_id

    graph = ET.SubElement(
        root, f"{{{_GRAPHML_NS}}}graph", id="G", edgedefault="directed"
    )
    for i, code in enumerate(net.countries):
        node = ET.SubElement(graph, f"{{{_GRAPHML_NS}}}node", id=code)
        for name, values in (
            ("s_in", net.s_in),
            ("s_out", net.s_out),
            ("delta_s", net.delta_s),
        ):
            data = ET.SubElement(node, f"{{{_GRAPHML_NS}}}data", key=keys[name])
            data.text = repr(float(values[i]))
    for e, (i, j, w) in enumerate(net.iter_edges()):
        edge = ET.SubElement(
            graph,
            f"{{{_GRAPHML_NS}}}edge",
            source=net.countries[i],
            target=net.countries[j],
        )
        data = ET.SubElement(edge, f"{{{_GRAPHML_NS}}}data", key=keys["weight"])
        data.text = repr(w)
        for name, values in (edge_attrs or {}).items():
            data = ET.SubElement(edge, f"{{{_GRAPHML_NS}}}data", key=keys[name])
            data.text = repr(float(values[e]))

    tree = ET.ElementTree(root)
    ET.indent(tree)
    close = False
    if isinstance(stream, str):
        stream = open(stream, "wb")
        close = True
    try:
        tree.write(stream, encoding="utf-8", xml_declaration=True)
    finally:
        if close:
            stream.close()
