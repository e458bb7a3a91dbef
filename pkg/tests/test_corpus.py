import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_random_corpus
from eduembed.corpus import (Corpus, DataError, cap_student_responses, compute_acr,
                             filter_min_responses, load_corpus, make_domain_spec,
                             merge_corpora, save_corpus, split_cat, split_inductive,
                             split_transductive, subset_responses, to_score_matrix)
from eduembed.nncore import new_rng


def write_fixture(tmp_path, responses, q_rows, concepts, texts=None):
    (tmp_path / "responses.csv").write_text(
        "student_id,exercise_id,score\n" + "".join(f"{s},{e},{r}\n" for s, e, r in responses))
    (tmp_path / "q_matrix.csv").write_text(
        "exercise_id,concept_id\n" + "".join(f"{e},{c}\n" for e, c in q_rows))
    (tmp_path / "concepts.csv").write_text(
        "concept_id,name\n" + "".join(f"{c},{n}\n" for c, n in concepts))
    if texts is not None:
        (tmp_path / "exercise_texts.csv").write_text(
            "exercise_id,text\n" + "".join(f"{e},{t}\n" for e, t in texts))
    return tmp_path


class TestLoadCorpus:
    def test_small_fixture_counts(self, tmp_path):
        write_fixture(tmp_path,
                      [("sa", "ea", 1), ("sa", "eb", 0), ("sb", "ea", 1), ("sb", "eb", 1)],
                      [("ea", "c1"), ("eb", "c1")],
                      [("c1", "Algebra")])
        corpus = load_corpus(tmp_path)
        assert (corpus.num_students, corpus.num_exercises, corpus.num_concepts) == (2, 2, 1)
        assert corpus.num_responses == 4
        assert corpus.student_ids == ("sa", "sb")

    def test_empty_responses(self, tmp_path):
        write_fixture(tmp_path, [], [("ea", "c1")], [("c1", "Algebra")])
        with pytest.raises(DataError, match="no responses"):
            load_corpus(tmp_path)

    def test_bad_score(self, tmp_path):
        write_fixture(tmp_path, [("sa", "ea", 2)], [("ea", "c1")], [("c1", "Algebra")])
        with pytest.raises(DataError, match=r"score.*line=2.*score") as err:
            load_corpus(tmp_path)
        assert err.value.line == 2

    def test_dangling_exercise(self, tmp_path):
        write_fixture(tmp_path, [("sa", "zz", 1)], [("ea", "c1")], [("c1", "Algebra")])
        with pytest.raises(DataError, match="dangling exercise_id 'zz'"):
            load_corpus(tmp_path)

    def test_dangling_concept(self, tmp_path):
        write_fixture(tmp_path, [("sa", "ea", 1)], [("ea", "nope")], [("c1", "Algebra")])
        with pytest.raises(DataError, match="dangling concept_id"):
            load_corpus(tmp_path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="missing file"):
            load_corpus(tmp_path)

    def test_header_mismatch(self, tmp_path):
        write_fixture(tmp_path, [("sa", "ea", 1)], [("ea", "c1")], [("c1", "Algebra")])
        (tmp_path / "concepts.csv").write_text("concept,name\nc1,Algebra\n")
        with pytest.raises(DataError, match="expected header"):
            load_corpus(tmp_path)

    def test_empty_q_row_rejected(self):
        with pytest.raises(DataError, match="empty Q-row"):
            Corpus.build(responses=np.array([[0, 0, 1]]),
                         q_matrix=np.array([[0]], dtype=np.int8),
                         student_ids=["s"], exercise_ids=["e"],
                         concept_ids=["c"], concept_names=["Algebra"])

    def test_save_load_round_trip(self, tmp_path, small_corpus):
        out = tmp_path / "canon"
        save_corpus(small_corpus, out)
        again = load_corpus(out)
        np.testing.assert_array_equal(again.responses, small_corpus.responses)
        np.testing.assert_array_equal(again.q_matrix, small_corpus.q_matrix)
        # byte-determinism of a re-save
        save_corpus(again, tmp_path / "canon2")
        for name in ("responses.csv", "q_matrix.csv", "concepts.csv"):
            assert (out / name).read_bytes() == (tmp_path / "canon2" / name).read_bytes()

    def test_responses_immutable(self, tiny_corpus):
        with pytest.raises(ValueError):
            tiny_corpus.responses[0, 2] = 0


class TestAcr:
    def test_direct_mean(self):
        corpus = Corpus.build(
            responses=np.array([[0, 0, 1], [1, 0, 0], [2, 0, 1], [3, 0, 1]]),
            q_matrix=np.array([[1]], dtype=np.int8),
            student_ids=list("abcd"), exercise_ids=["e"], concept_ids=["c"],
            concept_names=["Algebra"])
        assert compute_acr(corpus, 0) == 0.75

    def test_unanswered_is_none(self, tiny_corpus):
        corpus = Corpus.build(
            responses=np.array([[0, 0, 1]]),
            q_matrix=np.array([[1], [1]], dtype=np.int8),
            student_ids=["s"], exercise_ids=["e0", "e1"], concept_ids=["c"],
            concept_names=["Algebra"])
        assert compute_acr(corpus, 1) is None

    def test_out_of_range(self, tiny_corpus):
        with pytest.raises(IndexError):
            compute_acr(tiny_corpus, 99)

    def test_count_weighted_mean_equals_overall_rate(self):
        corpus = make_random_corpus(new_rng(9), 12, 8, 3, 300)
        total = 0.0
        weight = 0
        for j in range(corpus.num_exercises):
            rate = compute_acr(corpus, j)
            if rate is None:
                continue
            n = len(corpus.exercise_rows[j])
            total += rate * n
            weight += n
        overall = corpus.responses[:, 2].mean()
        assert abs(total / weight - overall) < 1e-12


class TestTransductiveSplit:
    def test_sizes_100(self):
        corpus = make_random_corpus(new_rng(0), 10, 5, 2, 100)
        split = split_transductive(corpus, (0.7, 0.1, 0.2), seed=7)
        assert (len(split.train), len(split.valid), len(split.test)) == (70, 10, 20)

    def test_deterministic(self):
        corpus = make_random_corpus(new_rng(0), 10, 5, 2, 100)
        a = split_transductive(corpus, seed=7)
        b = split_transductive(corpus, seed=7)
        np.testing.assert_array_equal(a.train, b.train)
        np.testing.assert_array_equal(a.test, b.test)

    def test_largest_remainder_rounding(self):
        corpus = make_random_corpus(new_rng(0), 4, 3, 2, 10)
        split = split_transductive(corpus, (0.7, 0.1, 0.2), seed=0)
        assert (len(split.train), len(split.valid), len(split.test)) == (7, 1, 2)

    def test_bad_ratios(self):
        corpus = make_random_corpus(new_rng(0), 4, 3, 2, 10)
        with pytest.raises(ValueError, match="ratios"):
            split_transductive(corpus, (0.7, 0.1, 0.1), seed=0)

    @settings(max_examples=20, deadline=None)
    @given(n=st.integers(min_value=3, max_value=10_000), seed=st.integers(0, 2**16))
    def test_partition_property(self, n, seed):
        corpus = make_random_corpus(new_rng(seed), 8, 6, 3, n)
        split = split_transductive(corpus, seed=seed)
        combined = np.concatenate([split.train, split.valid, split.test])
        assert len(combined) == n
        assert len(np.unique(combined)) == n


class TestInductiveSplit:
    def test_even_halves(self):
        corpus = make_random_corpus(new_rng(1), 10, 6, 2, 200)
        split = split_inductive(corpus, seed=0)
        assert len(split.existing_students) == 5
        assert len(split.new_students) == 5

    def test_odd_split(self):
        corpus = make_random_corpus(new_rng(1), 11, 6, 2, 220)
        split = split_inductive(corpus, seed=0)
        sizes = {len(split.existing_students), len(split.new_students)}
        assert sizes == {5, 6}

    def test_deterministic(self):
        corpus = make_random_corpus(new_rng(1), 10, 6, 2, 200)
        a = split_inductive(corpus, seed=4)
        b = split_inductive(corpus, seed=4)
        np.testing.assert_array_equal(a.new_students, b.new_students)
        for i in a.new_students:
            np.testing.assert_array_equal(a.support_rows[int(i)], b.support_rows[int(i)])

    def test_no_student_overlap_and_row_partition(self):
        corpus = make_random_corpus(new_rng(2), 9, 6, 2, 150)
        split = split_inductive(corpus, seed=1)
        assert not set(split.existing_students) & set(split.new_students)
        for i in split.new_students:
            i = int(i)
            sup, ev = set(split.support_rows[i]), set(split.eval_rows[i])
            assert not sup & ev
            assert sup | ev == set(corpus.student_rows[i].tolist())

    def test_low_response_student_flagged(self):
        rows = [[0, 0, 1], [0, 1, 0], [0, 2, 1], [1, 0, 1]]
        corpus = Corpus.build(
            responses=np.array(rows), q_matrix=np.ones((3, 1), dtype=np.int8),
            student_ids=["s0", "s1"], exercise_ids=["e0", "e1", "e2"],
            concept_ids=["c"], concept_names=["Algebra"])
        for seed in range(6):
            split = split_inductive(corpus, seed=seed)
            if 1 in split.new_students:
                assert 1 in split.low_response_students
                assert len(split.support_rows[1]) == 0
                assert len(split.eval_rows[1]) == 1
                break
        else:
            pytest.fail("student 1 never landed in the new set")


class TestCap:
    def test_under_cap_untouched(self, small_corpus):
        capped = cap_student_responses(small_corpus, cap=50, seed=0)
        assert capped.num_responses == small_corpus.num_responses

    def test_over_cap_subset(self):
        corpus = make_random_corpus(new_rng(3), 2, 40, 2, 160)
        capped = cap_student_responses(corpus, cap=50, seed=0)
        for i in range(2):
            rows = capped.student_rows[i]
            assert len(rows) <= 50
        assert capped.parent_rows is not None
        original_pairs = {tuple(r) for r in corpus.responses.tolist()}
        assert all(tuple(r) in original_pairs for r in capped.responses.tolist())

    def test_cap_validation(self, small_corpus):
        with pytest.raises(ValueError):
            cap_student_responses(small_corpus, cap=0)


class TestScoreMatrix:
    def test_single_cell(self):
        corpus = Corpus.build(
            responses=np.array([[0, 0, 1]]), q_matrix=np.array([[1]], dtype=np.int8),
            student_ids=["s"], exercise_ids=["e"], concept_ids=["c"],
            concept_names=["Algebra"])
        matrix = to_score_matrix(corpus)
        assert matrix.get(0, 0) == 1
        assert matrix.present_count == 1
        assert matrix.get(0, 0) is not None

    def test_duplicate_last_wins(self):
        corpus = Corpus.build(
            responses=np.array([[0, 0, 1], [0, 0, 0]]),
            q_matrix=np.array([[1]], dtype=np.int8),
            student_ids=["s"], exercise_ids=["e"], concept_ids=["c"],
            concept_names=["Algebra"])
        matrix = to_score_matrix(corpus)
        assert matrix.get(0, 0) == 0
        assert matrix.duplicate_count == 1

    def test_absent_cells_are_none_not_zero(self, tiny_corpus):
        corpus = Corpus.build(
            responses=np.array([[0, 0, 0]]), q_matrix=np.array([[1], [1]], dtype=np.int8),
            student_ids=["s"], exercise_ids=["e0", "e1"], concept_ids=["c"],
            concept_names=["Algebra"])
        matrix = to_score_matrix(corpus)
        assert matrix.get(0, 0) == 0
        assert matrix.get(0, 1) is None
        assert matrix.dense[0, 1] == -1


class TestCatSplit:
    def test_disjoint_per_student(self):
        corpus = make_random_corpus(new_rng(5), 8, 20, 3, 400)
        split = split_cat(corpus, seed=2)
        pre = set(split.pretrain_rows.tolist())
        for i in range(corpus.num_students):
            pool = set(split.pool_rows[i].tolist())
            evl = set(split.eval_rows[i].tolist())
            assert not pool & evl
            assert not pool & pre
            assert not evl & pre

    def test_pretrain_fraction(self):
        corpus = make_random_corpus(new_rng(6), 10, 40, 3, 1000)
        split = split_cat(corpus, pretrain_ratio=0.3, seed=0)
        dedup = to_score_matrix(corpus).present_count
        assert abs(len(split.pretrain_rows) / dedup - 0.3) < 0.05


class TestViewsAndMerge:
    def test_subset_parent_rows_compose(self, small_corpus):
        first = subset_responses(small_corpus, np.arange(0, 20))
        second = subset_responses(first, np.arange(0, 10))
        np.testing.assert_array_equal(second.parent_rows, np.arange(0, 10))

    def test_filter_min_responses(self):
        rows = [[0, 0, 1]] * 1 + [[1, 0, 1], [1, 1, 0], [1, 2, 1]]
        corpus = Corpus.build(
            responses=np.array([[0, 0, 1], [1, 0, 1], [1, 1, 0], [1, 2, 1]]),
            q_matrix=np.ones((3, 1), dtype=np.int8),
            student_ids=["low", "high"], exercise_ids=["e0", "e1", "e2"],
            concept_ids=["c"], concept_names=["Algebra"])
        kept = filter_min_responses(corpus, 2)
        assert kept.student_ids == ("high",)
        assert kept.num_responses == 3

    def test_merge_block_diagonal(self):
        a = make_random_corpus(new_rng(7), 3, 4, 2, 30)
        b = Corpus.build(
            responses=np.array([[0, 0, 1]]), q_matrix=np.array([[1]], dtype=np.int8),
            student_ids=["s0"], exercise_ids=["x0"], concept_ids=["y0"],
            concept_names=["Other"])
        merged = merge_corpora([a, b])
        assert merged.num_exercises == 5
        assert merged.num_concepts == 3
        assert merged.q_matrix[4, 2] == 1
        assert merged.q_matrix[4, :2].sum() == 0
        # shared student id "s0" merges
        assert merged.num_students == 3

    def test_merge_rejects_entity_overlap(self):
        a = make_random_corpus(new_rng(7), 3, 4, 2, 30)
        with pytest.raises(DataError, match="overlap"):
            merge_corpora([a, a])

    def test_domain_spec_refuses_concept_overlap(self):
        a = make_random_corpus(new_rng(8), 3, 4, 2, 30)
        with pytest.raises(DataError, match="overlap"):
            make_domain_spec([a], a)

    def test_domain_spec_eval_support_partition(self):
        a = make_random_corpus(new_rng(8), 3, 4, 2, 30)
        b = Corpus.build(
            responses=np.array([[0, 0, 1], [0, 0, 0], [1, 0, 1], [2, 0, 0]]),
            q_matrix=np.array([[1]], dtype=np.int8),
            student_ids=["t0", "t1", "t2"], exercise_ids=["x"], concept_ids=["y"],
            concept_names=["Other"])
        spec = make_domain_spec([a], b, support_ratio=0.5, seed=0)
        both = np.concatenate([spec.target_support, spec.target_eval])
        assert sorted(both.tolist()) == list(range(4))
