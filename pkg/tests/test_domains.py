import itertools
from pathlib import Path

import numpy as np
import pytest
import requests

from dncga.config import GAConfig
from dncga.errors import ConfigError, DataError, ParseError
from dncga.ga import NEGATIVE_INFINITY, Individual, run_ga
from dncga.domains import (
    BinPackingInstance,
    BinPackingProblem,
    GraphColoringProblem,
    bin_fills,
    bpp_fitness,
    coloring_conflicts,
    coloring_fitness,
    fetch_dimacs,
    format_bpp,
    generate_bpp,
    load_problem,
    parse_bpp,
    parse_bpplib,
    parse_dimacs,
)
from dncga.operators import UniformCrossover

TRIANGLE = "c triangle\np edge 3 3\ne 1 2\ne 2 3\ne 1 3\n"
# 4-cycle with one chord
KITE = "p edge 4 5\ne 1 2\ne 2 3\ne 3 4\ne 4 1\ne 1 3\n"


def bpp(weights, capacity, name="t"):
    return BinPackingInstance(weights=np.array(weights, dtype=np.int64), capacity=capacity, name=name)


# reference evaluators written loop by loop
def reference_coloring(edges, genome):
    for u, v in edges:
        if genome[u] == genome[v]:
            return NEGATIVE_INFINITY
    return -float(len(set(genome)))


def reference_bpp(weights, capacity, genome):
    fills = {}
    for w, b in zip(weights, genome):
        fills[b] = fills.get(b, 0) + w
    if any(f > capacity for f in fills.values()):
        return NEGATIVE_INFINITY
    return sum((f / capacity) ** 2 for f in fills.values()) / len(fills)


class TestParseDimacs:
    def test_path(self):
        inst = parse_dimacs("p edge 3 2\ne 1 2\ne 2 3")
        assert inst.vertex_count == 3
        assert {tuple(e) for e in inst.edges.tolist()} == {(0, 1), (1, 2)}

    def test_self_loop_dropped(self):
        inst = parse_dimacs("p edge 2 1\ne 1 1")
        assert inst.vertex_count == 2 and inst.edges.shape == (0, 2)

    def test_duplicates_and_reversed_edges_merge(self):
        inst = parse_dimacs("p edge 3 3\ne 1 2\ne 2 1\ne 1 2\n")
        assert inst.edges.tolist() == [[0, 1]]

    def test_col_keyword_and_comments(self):
        inst = parse_dimacs("c hello\n\np col 4 1\nc mid\ne 4 1\n")
        assert inst.edges.tolist() == [[0, 3]]

    def test_vertex_out_of_range(self):
        with pytest.raises(ParseError) as err:
            parse_dimacs("p edge 3 1\ne 1 5")
        assert err.value.line == 2

    @pytest.mark.parametrize(
        "text",
        ["e 1 2\n", "c only comments\n", "p edge 3\n", "p edge 3 1\ne 1\n", "p edge 3 1\nx 1 2\n", "p edge 3 1\ne a 2\n",
         "p edge 3 1\np edge 3 1\n"],
        ids=["edge-first", "no-p", "short-p", "short-e", "unknown-tag", "non-int", "two-p"],
    )
    def test_malformed(self, text):
        with pytest.raises(ParseError):
            parse_dimacs(text)


class TestColoringFitness:
    def test_triangle(self):
        problem = GraphColoringProblem(parse_dimacs(TRIANGLE))
        genome = np.array([0, 1, 2])
        assert coloring_fitness(problem.instance, genome) == -3.0
        assert problem.report(Individual(genome=genome, fitness=-3.0)) == 3.0

    def test_monochrome_invalid(self):
        inst = parse_dimacs(KITE)
        assert coloring_fitness(inst, np.zeros(4, int)) == NEGATIVE_INFINITY
        assert GraphColoringProblem(inst).report(Individual(genome=np.zeros(4, int))) == float("inf")

    def test_edgeless_one_color(self):
        inst = parse_dimacs("p edge 4 0\n")
        assert coloring_fitness(inst, np.array([7, 7, 7, 7])) == -1.0

    def test_graded_mode(self):
        inst = parse_dimacs(TRIANGLE)
        # vertices 0 and 1 share a color: one conflict, two colors
        assert coloring_conflicts(inst, np.array([0, 0, 1])) == 1
        assert coloring_fitness(inst, np.array([0, 0, 1]), "graded") == -(1 * 3 + 2)
        assert coloring_fitness(inst, np.array([0, 1, 2]), "graded") == -3.0

    def test_relabel_invariance(self, rng):
        inst = parse_dimacs(KITE)
        for _ in range(200):
            genome = rng.integers(0, 4, size=4)
            relabel = rng.permutation(4)
            assert coloring_fitness(inst, relabel[genome]) == coloring_fitness(inst, genome)

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            coloring_fitness(parse_dimacs(TRIANGLE), np.array([0, 1]))

    def test_matches_enumeration(self):
        inst = parse_dimacs(KITE)
        edges = inst.edges.tolist()
        for genome in itertools.product(range(4), repeat=4):
            assert coloring_fitness(inst, np.array(genome)) == reference_coloring(edges, genome)


class TestParseBpp:
    def test_canonical(self):
        inst = parse_bpp("t1\n3 10\n5\n5\n10")
        assert inst.name == "t1" and inst.item_count == 3 and inst.capacity == 10
        assert inst.weights.tolist() == [5, 5, 10]

    def test_weight_above_capacity(self):
        with pytest.raises(ParseError) as err:
            parse_bpp("t1\n2 10\n5\n11\n")
        assert err.value.line == 4

    def test_count_mismatch(self):
        with pytest.raises(ParseError):
            parse_bpp("t1\n3 10\n5\n5\n")

    @pytest.mark.parametrize(
        "text",
        ["t1\n", "t1\n3\n1\n1\n1\n", "t1\n2 10\n5\nfive\n", "t1\n2 10\n5 5\n", "t1\n1 10\n0\n", "t1\n0 10\n"],
        ids=["no-header", "short-header", "non-int", "two-per-line", "zero-weight", "no-items"],
    )
    def test_malformed(self, text):
        with pytest.raises(ParseError):
            parse_bpp(text)

    def test_bpplib_layout(self):
        inst = parse_bpplib("4\n100\n50\n30 20\n99\n", name="hard0.txt")
        assert inst.name == "hard0.txt" and inst.capacity == 100
        assert inst.weights.tolist() == [50, 30, 20, 99]

    def test_format_reparses(self):
        inst = bpp([3, 9, 4], 12, name="small")
        again = parse_bpp(format_bpp(inst))
        assert again.name == "small" and again.capacity == 12
        assert again.weights.tolist() == [3, 9, 4]


class TestBppFitness:
    def test_perfect_fill(self):
        assert bpp_fitness(bpp([5, 5], 10), np.array([0, 0])) == 1.0

    def test_two_half_bins(self):
        assert bpp_fitness(bpp([5, 5], 10), np.array([0, 1])) == pytest.approx(0.25)

    def test_overfull(self):
        assert bpp_fitness(bpp([6, 6], 10), np.array([0, 0])) == NEGATIVE_INFINITY

    def test_graded_overflow(self):
        assert bpp_fitness(bpp([6, 6], 10), np.array([0, 0]), "graded") == pytest.approx(-(2 / 10 + 1))

    def test_bin_labels_do_not_matter(self):
        inst = bpp([5, 3, 2], 10)
        assert bpp_fitness(inst, np.array([2, 2, 0])) == bpp_fitness(inst, np.array([0, 0, 1]))

    def test_fills(self):
        np.testing.assert_array_equal(bin_fills(bpp([5, 3, 2], 10), np.array([2, 2, 0])), [2, 0, 8])

    def test_report(self):
        problem = BinPackingProblem(bpp([6, 6], 10), invalid_mode="graded")
        assert problem.report(Individual(genome=np.array([0, 0]))) == NEGATIVE_INFINITY
        assert problem.report(Individual(genome=np.array([0, 1]))) == pytest.approx(0.36)

    def test_valid_range_and_merge_property(self):
        rng = np.random.default_rng(99)
        for _ in range(300):
            L = int(rng.integers(2, 8))
            inst = bpp(rng.integers(1, 11, size=L), 20)
            genome = rng.integers(0, L, size=L)
            fit = bpp_fitness(inst, genome)
            if fit == NEGATIVE_INFINITY:
                continue
            assert 0 < fit <= 1
            fills = bin_fills(inst, genome)
            used = np.flatnonzero(fills)
            if used.size < 2:
                continue
            a, b = used[:2]
            if fills[a] + fills[b] <= inst.capacity:
                merged = np.where(genome == b, a, genome)
                assert bpp_fitness(inst, merged) >= fit - 1e-12

    def test_matches_enumeration(self):
        weights, capacity = [4, 7, 3, 6], 10
        inst = bpp(weights, capacity)
        for genome in itertools.product(range(4), repeat=4):
            expected = reference_bpp(weights, capacity, genome)
            assert bpp_fitness(inst, np.array(genome)) == pytest.approx(expected, rel=1e-12)


class TestGaFindsEnumeratedOptimum:
    def test_bin_packing(self):
        weights, capacity = [4, 7, 3, 6], 10
        best = max(reference_bpp(weights, capacity, g) for g in itertools.product(range(4), repeat=4))
        problem = BinPackingProblem(bpp(weights, capacity))
        history = run_ga(problem, UniformCrossover(), GAConfig(population_size=40, generations=100), np.random.default_rng(3))
        assert history.best.fitness == pytest.approx(best)

    def test_coloring(self):
        inst = parse_dimacs(KITE)
        edges = inst.edges.tolist()
        best = max(reference_coloring(edges, g) for g in itertools.product(range(4), repeat=4))
        assert best == -3.0
        history = run_ga(
            GraphColoringProblem(inst), UniformCrossover(), GAConfig(population_size=40, generations=100),
            np.random.default_rng(3),
        )
        assert history.best.fitness == best


class TestGenerateBpp:
    def test_protocol_shape(self, rng):
        inst = generate_bpp(40, 10, 25, 100, rng, name="g")
        assert inst.item_count == 40 and inst.capacity == 100
        assert inst.weights.min() >= 10 and inst.weights.max() <= 25

    def test_degenerate_range(self, rng):
        assert generate_bpp(15, 10, 10, 100, rng).weights.tolist() == [10] * 15

    def test_uniform_mean(self):
        inst = generate_bpp(10_000, 10, 25, 100, np.random.default_rng(6))
        sigma = np.sqrt(((25 - 10 + 1) ** 2 - 1) / 12 / 10_000)
        assert abs(inst.weights.mean() - 17.5) < 3 * sigma

    def test_both_ends_reachable(self):
        inst = generate_bpp(2000, 1, 3, 5, np.random.default_rng(0))
        assert set(inst.weights.tolist()) == {1, 2, 3}

    @pytest.mark.parametrize("args", [(0, 1, 2, 10), (5, 3, 2, 10), (5, 1, 20, 10), (5, 0, 2, 10)])
    def test_bad_bounds(self, args, rng):
        with pytest.raises(ConfigError):
            generate_bpp(*args, rng)


class TestLoadProblem:
    def test_by_extension(self, tmp_path):
        (tmp_path / "tri.col").write_text(TRIANGLE)
        (tmp_path / "a.bpp").write_text("a\n2 10\n5\n5\n")
        (tmp_path / "h.txt").write_text("2\n10\n5\n5\n")
        col = load_problem(tmp_path / "tri.col")
        assert isinstance(col, GraphColoringProblem) and col.gene_range == 3 and col.name == "tri.col"
        for name in ("a.bpp", "h.txt"):
            p = load_problem(tmp_path / name, invalid_mode="graded")
            assert isinstance(p, BinPackingProblem) and p.gene_range == 2 and p.invalid_mode == "graded"

    def test_missing_file_names_path(self, tmp_path):
        with pytest.raises(DataError, match="nope.col"):
            load_problem(tmp_path / "nope.col")

    def test_unknown_extension(self, tmp_path):
        (tmp_path / "x.json").write_text("{}")
        with pytest.raises(DataError):
            load_problem(tmp_path / "x.json")

    def test_parse_error_names_file(self, tmp_path):
        (tmp_path / "bad.col").write_text("p edge 2 1\ne 1 3\n")
        with pytest.raises(ParseError, match="bad.col"):
            load_problem(tmp_path / "bad.col")

    def test_checked_in_instance(self):
        path = Path(__file__).resolve().parent.parent / "instances" / "myciel3.col"
        problem = load_problem(path)
        assert problem.genome_length == 11
        assert problem.instance.edges.shape == (20, 2)


class FakeResponse:
    def __init__(self, text, status_code=200):
        self.text = text
        self.status_code = status_code


class TestFetchDimacs:
    def test_writes_parsed_file(self, tmp_path, monkeypatch):
        seen = []

        def fake_get(url, timeout):
            seen.append(url)
            return FakeResponse(TRIANGLE)

        monkeypatch.setattr("dncga.domains.requests.get", fake_get)
        path = fetch_dimacs("tri", tmp_path / "inst", base_url="https://example.org/col/")
        assert seen == ["https://example.org/col/tri.col"]
        assert path == tmp_path / "inst" / "tri.col"
        assert load_problem(path).gene_range == 3

    def test_http_error(self, tmp_path, monkeypatch):
        monkeypatch.setattr("dncga.domains.requests.get", lambda url, timeout: FakeResponse("gone", 404))
        with pytest.raises(DataError, match="HTTP 404"):
            fetch_dimacs("games120", tmp_path)
        assert not (tmp_path / "games120.col").exists()

    def test_network_error(self, tmp_path, monkeypatch):
        def offline(url, timeout):
            raise requests.ConnectionError("no route to host")

        monkeypatch.setattr("dncga.domains.requests.get", offline)
        with pytest.raises(DataError, match="games120.col"):
            fetch_dimacs("games120.col", tmp_path)

    def test_unparseable_body_not_written(self, tmp_path, monkeypatch):
        monkeypatch.setattr("dncga.domains.requests.get", lambda url, timeout: FakeResponse("<html>moved</html>"))
        with pytest.raises(ParseError):
            fetch_dimacs("games120", tmp_path)
        assert not (tmp_path / "games120.col").exists()
