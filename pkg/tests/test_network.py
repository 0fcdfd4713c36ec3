import io
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from helpers import bruteforce_imbalance_edges, random_network, random_trade_matrix
from tradeflux.ingest import TradeMatrix
from tradeflux.network import (
    ImbalanceNetwork,
    build_imbalance_network,
    flux_histogram,
    global_balance_residual,
    node_accounts,
    read_edge_list,
    total_flux,
    write_edge_list,
    write_graphml,
)


def test_two_country_deficit_points_at_surplus():
    # C1 exports 5 to C2 and only receives 3 back, so C2 owes the difference:
    # money flows C2 -> C1 carrying 2.
    tm = TradeMatrix(2000, ("C1", "C2"), np.array([[0.0, 5.0], [3.0, 0.0]]))
    net = build_imbalance_network(tm)
    assert [(net.countries[i], net.countries[j], w) for i, j, w in net.iter_edges()] == [
        ("C2", "C1", 2.0)
    ]


def test_three_country_cycle():
    tm = TradeMatrix(2000, ("C1", "C2", "C3"), np.array([
        [0.0, 3.0, 0.0],
        [0.0, 0.0, 2.0],
        [2.0, 0.0, 0.0],
    ]))
    net = build_imbalance_network(tm)
    edges = {(net.countries[i], net.countries[j]): w for i, j, w in net.iter_edges()}
    assert edges == {("C2", "C1"): 3.0, ("C3", "C2"): 2.0, ("C1", "C3"): 2.0}


def test_builder_matches_bruteforce_reference():
    rng = np.random.default_rng(7)
    for _ in range(10):
        tm = random_trade_matrix(rng, n=15, density=0.5)
        net = build_imbalance_network(tm)
        got = {
            (net.countries[i], net.countries[j]): w for i, j, w in net.iter_edges()
        }
        want = bruteforce_imbalance_edges(tm)
        assert got.keys() == want.keys()
        for pair in want:
            assert got[pair] == pytest.approx(want[pair], rel=1e-14)


def test_balanced_pair_produces_no_edge():
    exports = np.array([[0.0, 7.25], [7.25, 0.0]])
    net = build_imbalance_network(TradeMatrix(2000, ("A", "B"), exports))
    assert net.n_edges == 0
    # imbalance at float-noise scale is treated as balanced too
    exports = np.array([[0.0, 1e9], [1e9 * (1 + 1e-14), 0.0]])
    net = build_imbalance_network(TradeMatrix(2000, ("A", "B"), exports))
    assert net.n_edges == 0


def test_accounts_match_manual_sums(net3):
    accounts = {a.country: a for a in node_accounts(net3)}
    assert accounts["S"].s_out == 3.0 and accounts["S"].s_in == 0.0
    assert accounts["S"].delta_s == -3.0 and accounts["S"].classification == "source"
    assert accounts["A"].k_in == 1 and accounts["A"].k_out == 1
    assert accounts["A"].delta_s == 1.0 and accounts["A"].classification == "sink"
    assert accounts["B"].delta_s == 2.0 and accounts["B"].classification == "sink"


def test_neutral_classification():
    net = ImbalanceNetwork.from_edges([("A", "B", 2.0), ("B", "C", 2.0)])
    accounts = {a.country: a for a in node_accounts(net)}
    assert accounts["B"].classification == "neutral"
    assert accounts["B"].delta_s == 0.0


def test_global_balance_is_structural():
    # imbalances must cancel for any edge list, not just builder outputs
    rng = np.random.default_rng(11)
    for _ in range(10):
        net = random_network(rng, n=30, density=0.3)
        residual = global_balance_residual(node_accounts(net))
        assert abs(residual) < 1e-9 * total_flux(net)


def test_from_edges_validation():
    with pytest.raises(ValueError, match="self-loops"):
        ImbalanceNetwork.from_edges([("A", "A", 1.0)])
    with pytest.raises(ValueError, match="positive"):
        ImbalanceNetwork.from_edges([("A", "B", 0.0)])
    with pytest.raises(ValueError, match="positive"):
        ImbalanceNetwork.from_edges([("A", "B", np.inf)])
    with pytest.raises(ValueError, match="duplicate edge"):
        ImbalanceNetwork.from_edges([("A", "B", 1.0), ("A", "B", 2.0)])
    with pytest.raises(ValueError, match="reciprocal"):
        ImbalanceNetwork.from_edges([("A", "B", 1.0), ("B", "A", 2.0)])
    with pytest.raises(ValueError, match="out of range"):
        ImbalanceNetwork(("A", "B"), [0], [5], [1.0])
    with pytest.raises(ValueError, match="duplicate country"):
        ImbalanceNetwork(("A", "A"), [], [], [])


def test_isolated_countries_keep_zero_accounts():
    net = ImbalanceNetwork.from_edges([("A", "B", 1.0)], countries=("A", "B", "Z"))
    accounts = {a.country: a for a in node_accounts(net)}
    assert accounts["Z"].k_in == accounts["Z"].k_out == 0
    assert accounts["Z"].delta_s == 0.0


def test_adjacency_views(net3):
    s = net3.index["S"]
    b = net3.index["B"]
    targets, weights = net3.out_edges(s)
    assert sorted(net3.countries[t] for t in targets) == ["A", "B"]
    assert weights.sum() == 3.0
    sources, weights = net3.in_edges(b)
    assert sorted(net3.countries[u] for u in sources) == ["A", "S"]
    assert weights.sum() == 2.0
    assert net3.weight_between(s, b) == 1.0
    assert net3.weight_between(b, s) == 0.0


def test_reverse_flips_edges_and_imbalances(net3):
    rev = net3.reverse()
    assert rev.countries == net3.countries
    fwd_edges = {(i, j): w for i, j, w in net3.iter_edges()}
    rev_edges = {(j, i): w for i, j, w in rev.iter_edges()}
    assert fwd_edges == rev_edges
    np.testing.assert_array_equal(rev.delta_s, -net3.delta_s)
    np.testing.assert_array_equal(rev.s_in, net3.s_out)


def test_canonical_edge_order():
    net = ImbalanceNetwork.from_edges(
        [("C", "A", 1.0), ("B", "A", 2.0), ("B", "C", 3.0)]
    )
    pairs = [(net.countries[i], net.countries[j]) for i, j, _ in net.iter_edges()]
    assert pairs == sorted(pairs)


def test_total_flux_and_histogram(net3):
    assert total_flux(net3) == 4.0
    hist = flux_histogram(net3, n_bins=4, log_scale=True)
    assert hist.counts.sum() == net3.n_edges
    assert np.all(np.diff(hist.bin_edges) > 0)
    # degenerate range: all weights equal
    net = ImbalanceNetwork.from_edges([("A", "B", 2.0), ("C", "D", 2.0)])
    hist = flux_histogram(net, n_bins=3)
    assert hist.counts.sum() == 2
    empty = ImbalanceNetwork.from_edges([], countries=("A",))
    assert flux_histogram(empty, n_bins=5).counts.size == 0
    with pytest.raises(ValueError, match="n_bins"):
        flux_histogram(net3, n_bins=0)


def test_edge_list_round_trip(net3):
    buf = io.StringIO()
    write_edge_list(net3, buf)
    text = buf.getvalue()
    assert text.splitlines()[0] == "src\tdst\tweight"
    back = read_edge_list(io.StringIO(text))
    assert back.countries == net3.countries
    assert list(back.iter_edges()) == list(net3.iter_edges())


def test_edge_list_reader_tolerates_headerless_and_spaces():
    back = read_edge_list("S A 2.0\nS B 1.0\nA B 1.0\n")
    assert back.n_edges == 3
    with pytest.raises(ValueError, match="expected"):
        read_edge_list("S A\n")
    with pytest.raises(ValueError, match="bad weight"):
        read_edge_list("src dst weight\nS A x\n")


def test_edge_list_round_trip_exact_weights():
    rng = np.random.default_rng(3)
    net = random_network(rng, n=12)
    buf = io.StringIO()
    write_edge_list(net, buf)
    back = read_edge_list(io.StringIO(buf.getvalue()))
    np.testing.assert_array_equal(back.weight, net.weight)


def test_graphml_carries_accounts_and_weights(net3):
    buf = io.BytesIO()
    write_graphml(net3, buf)
    root = ET.fromstring(buf.getvalue())
    ns = {"g": "http://graphml.graphdrawing.org/xmlns"}
    nodes = root.findall(".//g:node", ns)
    assert {n.get("id") for n in nodes} == {"S", "A", "B"}
    by_id = {n.get("id"): n for n in nodes}
    delta = by_id["S"].find("g:data[@key='n_delta_s']", ns)
    assert float(delta.text) == -3.0
    edges = root.findall(".//g:edge", ns)
    assert len(edges) == 3
    weights = {
        (e.get("source"), e.get("target")): float(e.find("g:data[@key='e_weight']", ns).text)
        for e in edges
    }
    assert weights[("S", "A")] == 2.0
