import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_graph
from ownet.errors import GraphError, LoadError
from ownet.graph import (
    NodeRecord,
    OwnershipEdge,
    build_graph,
    degree_arrays,
    degrees,
    induced_subgraph,
    load_cache,
    load_edges,
    load_graph,
    load_nodes,
    node_csv_row,
    reciprocal_link_ratio,
    save_cache,
    substantial_view,
    write_csv_rows,
    NODE_HEADER,
)


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


NODES_2 = "node_id,jurisdiction,nace_section,name,is_hq\nn1,US,C,Acme,0\nn2,NL,K,Holdco,1\n"


class TestLoadNodes:
    def test_two_rows(self, tmp_path):
        recs = load_nodes(write(tmp_path, "n.csv", NODES_2))
        assert len(recs) == 2
        assert recs[0] == NodeRecord("n1", "US", "C", "Acme", False)
        assert recs[1].is_hq

    def test_duplicate_id_rejected(self, tmp_path):
        text = "node_id,jurisdiction,nace_section,name,is_hq\nn1,US,C,,0\nn1,NL,K,,0\n"
        with pytest.raises(LoadError, match="duplicate") as err:
            load_nodes(write(tmp_path, "n.csv", text))
        assert err.value.line == 3

    def test_header_only(self, tmp_path):
        assert load_nodes(write(tmp_path, "n.csv", "node_id,jurisdiction,nace_section,name,is_hq\n")) == []

    def test_bad_header(self, tmp_path):
        with pytest.raises(LoadError, match="header"):
            load_nodes(write(tmp_path, "n.csv", "id,jur\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(LoadError):
            load_nodes(tmp_path / "absent.csv")

    def test_blank_jurisdiction_gets_sentinel(self, tmp_path):
        text = "node_id,jurisdiction,nace_section,name,is_hq\nn1,,,,0\n"
        rec = load_nodes(write(tmp_path, "n.csv", text))[0]
        assert rec.jurisdiction == "n.a."
        assert rec.nace_section == "V"


class TestLoadEdges:
    def test_parse(self, tmp_path):
        res = load_edges(write(tmp_path, "e.csv", "subsidiary_id,shareholder_id,pct\nn1,n2,55.0\n"))
        assert res.edges == [OwnershipEdge("n1", "n2", 55.0)]
        assert res.self_loops_dropped == 0

    def test_self_loop_dropped_and_counted(self, tmp_path):
        res = load_edges(
            write(tmp_path, "e.csv", "subsidiary_id,shareholder_id,pct\nn1,n1,30.0\nn1,n2,20\n")
        )
        assert len(res.edges) == 1
        assert res.self_loops_dropped == 1

    def test_out_of_range_pct(self, tmp_path):
        with pytest.raises(LoadError, match=r"\[0, 100\]"):
            load_edges(write(tmp_path, "e.csv", "subsidiary_id,shareholder_id,pct\nn1,n2,130.0\n"))

    def test_blank_pct_counted(self, tmp_path):
        res = load_edges(write(tmp_path, "e.csv", "subsidiary_id,shareholder_id,pct\nn1,n2,\n"))
        assert res.edges[0].pct == 0.0
        assert res.blank_pct == 1

    def test_unknown_id_strict(self, tmp_path):
        path = write(tmp_path, "e.csv", "subsidiary_id,shareholder_id,pct\nn1,zz,10\n")
        with pytest.raises(LoadError, match="unknown"):
            load_edges(path, known_ids={"n1"})
        assert len(load_edges(path).edges) == 1  # deferred validation


class TestBuildGraph:
    def test_counts(self):
        g = make_graph(3, [(0, 1), (1, 2)])
        assert (g.n_nodes, g.n_edges) == (3, 2)

    def test_toy_m1_counts(self, m1_graph):
        assert (m1_graph.n_nodes, m1_graph.n_edges) == (9, 8)

    def test_edge_to_missing_node(self):
        with pytest.raises(GraphError, match="unknown node"):
            build_graph([NodeRecord("a")], [OwnershipEdge("a", "b", 10)])

    def test_adjacency_indexes_consistent(self):
        g = make_graph(4, [(0, 1), (2, 1), (1, 3)])
        for u in range(4):
            for v in g.out_neighbors(u):
                assert u in g.in_neighbors(int(v))
        assert g.in_degrees().sum() == g.out_degrees().sum() == g.n_edges

    def test_immutable(self):
        g = make_graph(2, [(0, 1)])
        with pytest.raises(ValueError):
            g.src[0] = 1


class TestSubstantialView:
    def test_filter(self):
        g = make_graph(2, [(0, 1, 5.0), (0, 1, 10.0), (0, 1, 60.0)])
        assert substantial_view(g, 10).n_edges == 2

    def test_boundary_100(self):
        g = make_graph(2, [(0, 1, 99.9), (0, 1, 100.0)])
        assert substantial_view(g, 100).n_edges == 1

    def test_zero_threshold_rejected(self):
        g = make_graph(2, [(0, 1)])
        with pytest.raises(GraphError):
            substantial_view(g, 0.0)

    def test_excluded_counter(self):
        g = make_graph(2, [(0, 1, 5.0), (0, 1, 50.0)])
        assert substantial_view(g, 10).n_excluded == 1

    @given(st.lists(st.floats(min_value=0, max_value=100), min_size=0, max_size=30),
           st.floats(min_value=0.5, max_value=100), st.floats(min_value=0.5, max_value=100))
    @settings(max_examples=50, deadline=None)
    def test_monotone_in_threshold(self, pcts, t1, t2):
        t1, t2 = sorted((t1, t2))
        g = make_graph(2, [(0, 1, p) for p in pcts])
        assert substantial_view(g, t1).n_edges >= substantial_view(g, t2).n_edges


class TestDegrees:
    def test_toy_affiliate_a(self, m1_view, m1_graph):
        recs = {r.node_id: r for r in degrees(m1_view)}
        assert (recs["M1:a"].k_in, recs["M1:a"].k_out) == (3, 1)

    def test_isolated(self):
        g = make_graph(3, [(0, 1)])
        recs = {r.node_id: r for r in degrees(g)}
        assert (recs["n2"].k_in, recs["n2"].k_out) == (0, 0)

    def test_mean_degree_identity(self):
        rng = np.random.default_rng(5)
        from conftest import random_digraph

        g, _ = random_digraph(rng, 40)
        k_in, k_out = degree_arrays(g)
        assert k_in.sum() == k_out.sum() == g.n_edges
        assert k_in.mean() == pytest.approx(g.n_edges / g.n_nodes)

    def test_row_order_invariance(self):
        edges = [(0, 1, 20.0), (2, 1, 30.0), (1, 3, 40.0), (3, 0, 50.0)]
        g1 = make_graph(4, edges)
        g2 = make_graph(4, list(reversed(edges)))
        assert np.array_equal(g1.src, g2.src)
        assert np.array_equal(g1.dst, g2.dst)
        assert np.array_equal(g1.pct, g2.pct)

    def test_node_order_invariance(self):
        from ownet.graph import NodeRecord, OwnershipEdge, build_graph

        nodes = [NodeRecord(f"n{i}") for i in range(4)]
        rows = [OwnershipEdge("n0", "n1", 20.0), OwnershipEdge("n2", "n1", 30.0),
                OwnershipEdge("n1", "n3", 40.0)]
        by_id_a = {r.node_id: (r.k_in, r.k_out) for r in degrees(build_graph(nodes, rows))}
        by_id_b = {r.node_id: (r.k_in, r.k_out) for r in degrees(build_graph(list(reversed(nodes)), rows))}
        assert by_id_a == by_id_b


class TestReciprocal:
    def test_example(self):
        g = make_graph(4, [(0, 1), (1, 0), (1, 2), (2, 3)])
        assert reciprocal_link_ratio(g) == 0.5

    def test_dag(self):
        g = make_graph(3, [(0, 1), (1, 2)])
        assert reciprocal_link_ratio(g) == 0.0

    def test_two_cycle(self):
        g = make_graph(2, [(0, 1), (1, 0)])
        assert reciprocal_link_ratio(g) == 1.0


class TestInducedSubgraph:
    def test_triangle_subset(self):
        g = make_graph(3, [(0, 1), (1, 2), (2, 0)])
        sub = induced_subgraph(g, ["n0", "n1"])
        assert (sub.n_nodes, sub.n_edges) == (2, 1)

    def test_identity(self):
        g = make_graph(4, [(0, 1), (1, 2), (3, 1)])
        sub = induced_subgraph(g, g.ids)
        assert (sub.n_nodes, sub.n_edges) == (g.n_nodes, g.n_edges)
        assert np.array_equal(sub.pct, g.pct)

    def test_toy_restriction(self, m1_graph):
        sub = induced_subgraph(m1_graph, ["M1:HQ", "M1:a", "M1:b"])
        pairs = {(sub.ids[s], sub.ids[d]) for s, d in zip(sub.src, sub.dst)}
        assert pairs == {("M1:a", "M1:HQ"), ("M1:b", "M1:a")}

    def test_unknown_node(self, m1_graph):
        with pytest.raises(GraphError):
            induced_subgraph(m1_graph, ["M1:HQ", "ghost"])

    def test_metadata_preserved(self, m1_graph):
        sub = induced_subgraph(m1_graph, ["M1:HQ", "M1:a"])
        assert sub.jurisdiction_of(sub.index_of("M1:a")) == "NL"
        assert bool(sub.is_hq[sub.index_of("M1:HQ")])


class TestCache:
    def test_roundtrip(self, tmp_path, m1_graph):
        path = tmp_path / "g.npz"
        save_cache(m1_graph, path)
        back = load_cache(path)
        assert back.ids == m1_graph.ids
        assert np.array_equal(back.src, m1_graph.src)
        assert np.array_equal(back.pct, m1_graph.pct)
        assert [back.jurisdiction_of(i) for i in range(back.n_nodes)] == [
            m1_graph.jurisdiction_of(i) for i in range(m1_graph.n_nodes)
        ]
        assert back.ingest_counters == m1_graph.ingest_counters

    def test_version_check(self, tmp_path, m1_graph):
        path = tmp_path / "g.npz"
        save_cache(m1_graph, path)
        import numpy as np_

        data = dict(np_.load(path))
        data["version"] = np_.int64(99)
        np_.savez(path, **data)
        with pytest.raises(LoadError, match="version"):
            load_cache(path)


class TestCsvRoundTrip:
    def test_nodes_parse_emit_byte_equal(self, tmp_path):
        src = write(tmp_path, "nodes.csv", NODES_2)
        records = load_nodes(src)
        out = tmp_path / "out.csv"
        write_csv_rows(out, NODE_HEADER, (node_csv_row(r) for r in records))
        assert out.read_bytes() == src.read_bytes()

    def test_graph_load_convenience(self, tmp_path):
        write(tmp_path, "nodes.csv", NODES_2)
        write(tmp_path, "edges.csv", "subsidiary_id,shareholder_id,pct\nn1,n2,55.00\n")
        g = load_graph(tmp_path / "nodes.csv", tmp_path / "edges.csv")
        assert (g.n_nodes, g.n_edges) == (2, 1)
