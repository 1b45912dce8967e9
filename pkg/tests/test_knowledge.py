import random
from fractions import Fraction

import pytest

from conftest import CORPUS, read
from recipeforge.errors import DuplicateNameError, EmptyStoreError
from recipeforge.knowledge import (KnowledgeStore, PackageNode, affinity, chunk_recipe, graph_query, ingest,
                                   load_corpus, none_bundle, rank_candidates, retrieve_random, retrieve_similar)
from recipeforge.prompts import RANDOM_PREAMBLE, SIMILAR_PREAMBLE
from recipeforge.recipe import parse_recipe
from recipeforge.repo import RepoMetadata

DEPS = [f"dep{i}" for i in range(12)]
OPTS = [f"opt{i}" for i in range(8)]


def node(name, deps=(), variants=(), systems=("cmake",)):
    return PackageNode(name, frozenset(systems), frozenset(deps), frozenset(variants), f"# {name}\n")


def target(name="target", deps=(), opts=(), system="cmake"):
    return RepoMetadata(package_name=name, build_system=system, dependency_hints=set(deps), build_options=set(opts))


def test_affinity_worked_example():
    t = target(deps={"cmake", "cabana", "nlohmann-json", "googletest", "cxx", "c"}, opts={"hdf5", "silo", "tests"})
    s = affinity(t, node("cand", {"cmake", "cxx", "c"}, {"tests"}))
    assert (s.dep_overlap, s.opt_overlap) == (3, 1)
    assert s.score == pytest.approx(2.2)


def test_affinity_identical_and_disjoint():
    t = target(deps={"a", "b", "c", "d"}, opts={"x", "y"})
    assert affinity(t, node("p", {"a", "b", "c", "d"}, {"x", "y"})).score == pytest.approx(3.2)
    assert affinity(t, node("q", {"z"}, {"w"})).score == 0


def test_affinity_is_case_insensitive_and_aliased():
    t = target(deps={"GTest", "MPI"})
    assert affinity(t, node("p", {"googletest", "mpi"})).dep_overlap == 2


def test_negative_weights_rejected():
    with pytest.raises(ValueError):
        affinity(target(), node("p"), (-1.0, 0.4))


def test_affinity_matches_set_oracle():
    rng = random.Random(99)
    for _ in range(1000):
        td, to = set(rng.sample(DEPS, rng.randint(0, 8))), set(rng.sample(OPTS, rng.randint(0, 6)))
        pd, po = set(rng.sample(DEPS, rng.randint(0, 8))), set(rng.sample(OPTS, rng.randint(0, 6)))
        w = (rng.uniform(0, 2), rng.uniform(0, 2))
        s = affinity(target(deps=td, opts=to), node("p", pd, po), w)
        dep = sum(1 for d in td if d in pd)
        opt = sum(1 for o in to if o in po)
        assert (s.dep_overlap, s.opt_overlap) == (dep, opt)
        assert s.score == w[0] * dep + w[1] * opt


def _random_store(rng, n):
    nodes = []
    for i in range(n):
        systems = ("cmake",) if rng.random() < 0.7 else ("autotools",)
        nodes.append(node(f"pkg{i:03d}", rng.sample(DEPS, rng.randint(0, 6)), rng.sample(OPTS, rng.randint(0, 4)),
                          systems))
    return KnowledgeStore(nodes)


def test_ranking_matches_brute_force_sort():
    rng = random.Random(5)
    for n in (1, 2, 10, 50, 200):
        store = _random_store(rng, n)
        t = target(deps=set(rng.sample(DEPS, 5)), opts=set(rng.sample(OPTS, 3)))
        # exact rational scores so ties are real ties
        oracle = sorted(
            (name for name, nd in store.nodes.items() if "cmake" in nd.build_systems),
            key=lambda name: (-(Fraction(6, 10) * len(t.dependency_hints & store[name].dependencies)
                                + Fraction(4, 10) * len(t.build_options & store[name].variants)), name))
        ranked, _ = rank_candidates(store, t)
        assert [s.candidate for s in ranked] == oracle
        if oracle:
            k = min(3, len(oracle))
            assert retrieve_similar(store, t, count=k).packages == oracle[:k]


def test_scaling_weights_keeps_the_ranking():
    rng = random.Random(11)
    store = _random_store(rng, 80)
    t = target(deps=set(rng.sample(DEPS, 5)), opts=set(rng.sample(OPTS, 3)))
    base = [s.candidate for s in rank_candidates(store, t, (0.6, 0.4))[0]]
    for c in (0.5, 3.0, 10.0):
        assert [s.candidate for s in rank_candidates(store, t, (0.6 * c, 0.4 * c))[0]] == base


def test_adding_a_shared_dependency_never_lowers_affinity():
    rng = random.Random(3)
    for _ in range(200):
        t = target(deps=set(rng.sample(DEPS, 5)))
        deps = set(rng.sample(DEPS, 4))
        before = affinity(t, node("p", deps)).score
        extra = rng.choice(sorted(t.dependency_hints))
        assert affinity(t, node("p", deps | {extra})).score >= before


def test_similar_order_ties_and_exclusion():
    store = KnowledgeStore([node("alpha", {"a", "b"}), node("beta", {"a"}), node("gamma"),
                            node("zeta", {"a"}), node("target", {"a", "b", "c"}), node("py-target-ext", {"a", "b"})])
    t = target(deps={"a", "b", "c"})
    bundle = retrieve_similar(store, t, count=3)
    assert bundle.packages == ["alpha", "beta", "zeta"]
    assert {"target", "py-target-ext"} <= bundle.exclusions
    assert all(i.preamble == SIMILAR_PREAMBLE for i in bundle.items)
    assert retrieve_similar(store, t, count=1).packages == ["alpha"]


def test_similar_requires_same_build_system():
    store = KnowledgeStore([node("auto", {"a"}, systems=("autotools",)), node("cm")])
    assert retrieve_similar(store, target(deps={"a"}), count=2).packages == ["cm"]
    assert "insufficient_candidates" in retrieve_similar(store, target(deps={"a"}), count=2).flags


def test_empty_store_and_bad_count():
    with pytest.raises(EmptyStoreError):
        retrieve_similar(KnowledgeStore(), target(), 1)
    with pytest.raises(ValueError):
        retrieve_similar(KnowledgeStore([node("a")]), target(), 0)


def test_random_retrieval():
    store = KnowledgeStore([node(f"c{i}") for i in range(5)] +
                           [node(f"o{i}", systems=("autotools",)) for i in range(3)] + [node("target")])
    t = target()
    assert retrieve_random(store, t, 3, rng_seed=7).packages == retrieve_random(store, t, 3, rng_seed=7).packages
    same = retrieve_random(store, t, 4, same_build_system=True, rng_seed=1)
    assert all("cmake" in store[p].build_systems for p in same.packages)
    assert all(i.preamble == RANDOM_PREAMBLE for i in same.items)
    for seed in range(30):
        assert "target" not in retrieve_random(store, t, 8, rng_seed=seed).packages
    few = retrieve_random(KnowledgeStore([node("one"), node("target")]), t, 2)
    assert few.packages == ["one"] and "insufficient_candidates" in few.flags


def test_none_bundle_is_empty():
    bundle = none_bundle(KnowledgeStore([node("target"), node("x")]), target())
    assert bundle.items == [] and bundle.exclusions == {"target"}


def test_ingest_edges_skip_and_hash(tmp_path):
    a = 'class A(CMakePackage):\n    version("1")\n    depends_on("b")\n'
    b = 'class B(CMakePackage):\n    version("1")\n'
    store, report = ingest([("a", a, None), ("b", b, None), ("broken", "class X(", None)])
    assert store.edges()["a"] == ["b"]
    assert report.skipped[0][0] == "broken" and len(store) == 2
    assert store["a"].build_systems == {"cmake"}
    again, _ = ingest([("b", b, None), ("a", a, None)])
    assert again.content_hash() == store.content_hash()
    store.save(tmp_path / "kb.json")
    assert KnowledgeStore.load(tmp_path / "kb.json").content_hash() == store.content_hash()
    with pytest.raises(DuplicateNameError):
        ingest([("a", a, None), ("a", b, None)])


def test_corpus_ingests_cleanly():
    store, report = ingest(load_corpus(CORPUS))
    assert not report.skipped and len(store) == len(list(CORPUS.glob("*.py")))


def test_chunking_example_recipe():
    chunks = chunk_recipe(read(CORPUS / "example.py"))
    assert [c.kind for c in chunks] == ["header", "variants", "dependencies", "method_override"]
    assert chunks[1].text.count("variant(") == 3
    assert chunks[2].text.count("depends_on(") == 2
    assert all(c.embedding_text.startswith("class Example(") for c in chunks)


def test_no_methods_no_method_chunks():
    chunks = chunk_recipe('class A(CMakePackage):\n    version("1")\n    depends_on("b")\n')
    assert "method_override" not in [c.kind for c in chunks]


@pytest.mark.parametrize("path", sorted(CORPUS.glob("*.py")), ids=lambda p: p.stem)
def test_chunks_cover_every_directive_line_once(path):
    text = read(path)
    recipe = parse_recipe(text)
    covered = [n for c in chunk_recipe(text) for n in range(c.start_line, c.end_line + 1)]
    assert len(covered) == len(set(covered))
    directive_lines = ({v.line for v in recipe.versions} | {v.line for v in recipe.variants}
                       | {d.line for d in recipe.dependencies} | {c.line for c in recipe.conflicts})
    assert directive_lines - {0} <= set(covered)


def test_graph_query_shape():
    q = graph_query(target(name="cabana-pd", deps={"cmake", "cabana"}, opts={"hdf5"}))
    assert 'NOT toLower(p.name) CONTAINS toLower("cabana-pd")' in q
    assert "ORDER BY total_score DESC" in q and "LIMIT 2" in q
