"""Corpus ingestion, filtering, statistics, and synthetic generation."""

import json

import pytest
from scipy.stats import chi2_contingency

from namescore.corpus import (
    Corpus,
    CorpusError,
    FilterPolicy,
    IngestError,
    Label,
    SplitTag,
    SynthConfig,
    apply_filter_policy,
    compute_stats,
    drop_unlabeled,
    generate_synthetic,
    ingest_csv,
    ingest_jsonl,
    select_primary_name,
    split_corpus,
)

from conftest import fake_sha, make_corpus


class TestIngestJsonl:
    def test_names_list_takes_first(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(
            json.dumps({"sha256": fake_sha(1), "names": ["d3d9.dll", "other.dll"], "label": 0})
            + "\n"
        )
        result = ingest_jsonl(path)
        assert len(result.corpus) == 1
        assert result.corpus.records[0].name == "d3d9.dll"
        assert result.corpus.records[0].label is Label.BENIGN

    def test_label_mapping(self, tmp_path):
        path = tmp_path / "c.jsonl"
        lines = [
            {"sha256": fake_sha(1), "name": "a", "label": 0},
            {"sha256": fake_sha(2), "name": "b", "label": 1},
            {"sha256": fake_sha(3), "name": "x", "label": -1},
        ]
        path.write_text("".join(json.dumps(o) + "\n" for o in lines))
        corpus = ingest_jsonl(path).corpus
        assert [r.label for r in corpus] == [Label.BENIGN, Label.MALICIOUS, Label.UNLABELED]

    def test_malformed_line_reports_line_number(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(
            json.dumps({"sha256": fake_sha(1), "name": "a", "label": 0}) + "\nnot json\n"
        )
        with pytest.raises(IngestError, match="line 2"):
            ingest_jsonl(path)

    def test_empty_name_rejected_with_count(self, tmp_path):
        path = tmp_path / "c.jsonl"
        lines = [
            {"sha256": fake_sha(1), "name": "", "label": 0},
            {"sha256": fake_sha(2), "name": "ok.exe", "label": 1},
            {"sha256": fake_sha(3), "names": [], "label": 0},
        ]
        path.write_text("".join(json.dumps(o) + "\n" for o in lines))
        result = ingest_jsonl(path)
        assert len(result.corpus) == 1
        assert result.n_rejected_empty_name == 2
        assert result.n_lines == 3

    def test_names_wins_over_name(self, tmp_path):
        path = tmp_path / "c.jsonl"
        obj = {"sha256": fake_sha(1), "name": "single", "names": ["plural"], "label": 0}
        path.write_text(json.dumps(obj) + "\n")
        assert ingest_jsonl(path).corpus.records[0].name == "plural"

    def test_bad_label_rejected(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(json.dumps({"sha256": fake_sha(1), "name": "a", "label": 7}) + "\n")
        with pytest.raises(IngestError, match="line 1"):
            ingest_jsonl(path)

    def test_invalid_sha256_rejected(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(json.dumps({"sha256": "zz", "name": "a", "label": 0}) + "\n")
        with pytest.raises(IngestError, match="sha256"):
            ingest_jsonl(path)

    def test_unicode_preserved(self, tmp_path):
        path = tmp_path / "c.jsonl"
        obj = {"sha256": fake_sha(1), "names": ["β.dll", "x"], "label": 1}
        path.write_text(json.dumps(obj, ensure_ascii=False) + "\n", encoding="utf-8")
        assert ingest_jsonl(path).corpus.records[0].name == "β.dll"


class TestIngestCsv:
    def test_roundtrip(self, tmp_path):
        path = tmp_path / "c.csv"
        path.write_text(f"sha256,name,label\n{fake_sha(1)},hello.exe,1\n")
        corpus = ingest_csv(path).corpus
        assert corpus.records[0].name == "hello.exe"
        assert corpus.records[0].label is Label.MALICIOUS

    def test_missing_header(self, tmp_path):
        path = tmp_path / "c.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(IngestError):
            ingest_csv(path)


class TestSelectPrimaryName:
    def test_first_element(self):
        assert select_primary_name(["a.exe", "b.exe"]) == "a.exe"

    def test_singleton(self):
        assert select_primary_name(["only"]) == "only"

    def test_unicode_preserved(self):
        assert select_primary_name(["β.dll", "x"]) == "β.dll"

    def test_empty_list_error(self):
        with pytest.raises(CorpusError):
            select_primary_name([])


class TestFilterPolicy:
    def test_banned_substring_dropped(self):
        corpus = make_corpus([("virus_sample.exe", 1), ("settings.dll", 0)])
        filtered = apply_filter_policy(corpus, FilterPolicy())
        assert [r.name for r in filtered] == ["settings.dll"]

    def test_case_insensitive_fold(self):
        corpus = make_corpus([("MALdoc.bin", 1)])
        assert len(apply_filter_policy(corpus, FilterPolicy())) == 0

    def test_case_sensitive_mode(self):
        corpus = make_corpus([("MALdoc.bin", 1)])
        policy = FilterPolicy(case_insensitive=False)
        assert len(apply_filter_policy(corpus, policy)) == 1

    def test_idempotent(self):
        corpus = make_corpus([("virtual.exe", 0), ("ok.dll", 0), ("hacktool", 1)])
        policy = FilterPolicy()
        once = apply_filter_policy(corpus, policy)
        twice = apply_filter_policy(once, policy)
        assert once == twice

    def test_survivors_unchanged_and_ordered(self):
        corpus = make_corpus([("a.exe", 0), ("malware", 1), ("b.exe", 1), ("c.exe", 0)])
        filtered = apply_filter_policy(corpus, FilterPolicy())
        assert [r.name for r in filtered] == ["a.exe", "b.exe", "c.exe"]
        survivors = [r for r in corpus if r.name != "malware"]
        assert list(filtered.records) == survivors

    def test_empty_banned_substring_rejected(self):
        with pytest.raises(CorpusError):
            FilterPolicy(banned_substrings=("vir", ""))


class TestDropUnlabeled:
    def test_counts(self):
        corpus = make_corpus([("a", 0), ("b", -1), ("c", 1)])
        assert len(drop_unlabeled(corpus)) == 2

    def test_identity_when_none(self):
        corpus = make_corpus([("a", 0), ("c", 1)])
        assert drop_unlabeled(corpus) == corpus

    def test_all_unlabeled(self):
        corpus = make_corpus([("a", -1), ("b", -1)])
        assert len(drop_unlabeled(corpus)) == 0


class TestComputeStats:
    def test_hand_counts(self):
        corpus = make_corpus([("ab", 0), ("abc", 1)])
        stats = compute_stats(corpus)
        assert stats.length_histogram[Label.BENIGN] == {2: 1}
        assert stats.length_histogram[Label.MALICIOUS] == {3: 1}
        assert stats.char_frequency[Label.BENIGN] == {"a": 1, "b": 1}
        assert stats.class_counts == {Label.BENIGN: 1, Label.MALICIOUS: 1}

    def test_length_in_code_points(self):
        corpus = make_corpus([("βλ", 0)])
        assert compute_stats(corpus).length_histogram[Label.BENIGN] == {2: 1}

    def test_histogram_sums_match_class_counts(self):
        corpus = make_corpus([("aa", 0), ("bbb", 0), ("c", 1), ("dd", -1)])
        stats = compute_stats(corpus)
        for label, count in stats.class_counts.items():
            assert sum(stats.length_histogram[label].values()) == count

    def test_order_invariant(self):
        pairs = [("aa", 0), ("bbb", 1), ("c", 1)]
        s1 = compute_stats(make_corpus(pairs))
        s2 = compute_stats(make_corpus(list(reversed(pairs))))
        assert s1.class_counts == s2.class_counts
        assert s1.char_frequency == s2.char_frequency

    def test_empty_corpus_error(self):
        with pytest.raises(CorpusError):
            compute_stats(Corpus(()))

    def test_json_shape(self):
        doc = compute_stats(make_corpus([("ab", 0)])).to_json_dict()
        assert set(doc) == {"class_counts", "length_histogram", "char_frequency"}


class TestGenerateSynthetic:
    def test_deterministic(self):
        cfg = SynthConfig(n_benign=50, n_malicious=50, seed=1)
        assert generate_synthetic(cfg) == generate_synthetic(cfg)

    def test_all_malicious_boundary(self):
        corpus = generate_synthetic(SynthConfig(n_benign=0, n_malicious=25, seed=3))
        assert all(r.label is Label.MALICIOUS for r in corpus)

    def test_counts(self):
        corpus = generate_synthetic(SynthConfig(n_benign=30, n_malicious=20, seed=2))
        counts = corpus.class_counts()
        assert counts[Label.BENIGN] == 30
        assert counts[Label.MALICIOUS] == 20

    def test_class_conditional_char_frequencies_differ(self):
        corpus = generate_synthetic(SynthConfig(n_benign=10_000, n_malicious=10_000, seed=7))
        stats = compute_stats(corpus)
        benign = stats.char_frequency[Label.BENIGN]
        malicious = stats.char_frequency[Label.MALICIOUS]
        chars = sorted(set(benign) | set(malicious))
        table = [
            [benign.get(c, 0) + 1 for c in chars],
            [malicious.get(c, 0) + 1 for c in chars],
        ]
        _, p_value, _, _ = chi2_contingency(table)
        assert p_value < 0.01

    def test_length_tail_decays(self):
        corpus = generate_synthetic(SynthConfig(n_benign=5000, n_malicious=5000, seed=11))
        stats = compute_stats(corpus)
        hist = {}
        for per_class in stats.length_histogram.values():
            for length, count in per_class.items():
                hist[length] = hist.get(length, 0) + count
        lengths = sorted(hist)
        # mass above the 90th percentile length keeps shrinking
        tail = [hist[l] for l in lengths if l >= sorted(lengths)[int(len(lengths) * 0.6)]]
        assert tail == sorted(tail, reverse=True) or sum(tail[-3:]) < sum(tail[:3])

    def test_unknown_family_rejected(self):
        with pytest.raises(CorpusError):
            SynthConfig(pattern_families=("nope",))


class TestSplitCorpus:
    def test_partition(self):
        corpus = generate_synthetic(SynthConfig(n_benign=40, n_malicious=40, seed=5))
        train, test = split_corpus(corpus, test_fraction=0.25, seed=9)
        assert train.split_tag is SplitTag.TRAIN
        assert test.split_tag is SplitTag.TEST
        assert len(train) + len(test) == len(corpus)
        train_ids = {r.sha256 for r in train}
        assert all(r.sha256 not in train_ids for r in test)

    def test_deterministic(self):
        corpus = generate_synthetic(SynthConfig(n_benign=20, n_malicious=20, seed=5))
        assert split_corpus(corpus, 0.5, seed=1) == split_corpus(corpus, 0.5, seed=1)
