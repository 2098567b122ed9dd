import numpy as np
import pytest

from hyperformer.data import (UNKNOWN_VALUE, build_vocabulary, compute_frequency_buckets,
                              count_frequencies, load_vocabulary, parse_dataset,
                              save_vocabulary, serialize_dataset, split_dataset)
from hyperformer.errors import EmptyInputError, ParseError
from hyperformer.synthetic import (SyntheticSpec, generate_synthetic, positive_value_names,
                                   power_law_probs)


class TestBuildVocabulary:
    def test_hand_count(self):
        vocab = build_vocabulary([{"city": ["A"]}, {"city": ["B"]}, {"city": ["A"]}],
                                 ["city"])
        assert vocab.num_features == 3
        assert vocab.id_to_value == ["A", "B", UNKNOWN_VALUE]
        assert vocab.frequency.tolist() == [2, 1, 0]

    def test_one_unknown_per_field(self):
        vocab = build_vocabulary([{"a": ["x"], "b": ["y"]}], ["a", "b"])
        assert vocab.num_features == 4
        assert len(vocab.unknown_ids) == 2

    def test_missing_field_counts_unknown(self):
        vocab = build_vocabulary([{"a": ["x"]}, {"a": ["x"], "b": ["y"]}], ["a", "b"])
        b_unknown = vocab.unknown_ids[1]
        assert vocab.frequency[b_unknown] == 1
        # single-valued field frequencies sum to the record count
        a_ids = [g for g in range(vocab.num_features) if vocab.id_to_field[g] == 0]
        assert vocab.frequency[a_ids].sum() == 2

    def test_undeclared_field_rejected(self):
        with pytest.raises(ParseError, match="city"):
            build_vocabulary([{"city": ["A"]}], ["age"])

    def test_empty_rejected(self):
        with pytest.raises(EmptyInputError):
            build_vocabulary([], ["city"])


class TestParse:
    def test_known_values(self, tmp_path):
        p = tmp_path / "d.txt"
        p.write_text("1,city:A,age:30\n0,city:B,age:30\n")
        ds = parse_dataset(p, mode="build")
        assert ds.instances[0].label == 1
        vocab = ds.vocabulary
        assert ds.instances[0].slots == [[vocab.value_to_id[0]["A"]],
                                         [vocab.value_to_id[1]["30"]]]

    def test_unseen_maps_to_unknown(self, tmp_path):
        p = tmp_path / "d.txt"
        p.write_text("1,city:A\n")
        vocab = parse_dataset(p, mode="build").vocabulary
        q = tmp_path / "q.txt"
        q.write_text("0,city:Z\n")
        ds = parse_dataset(q, vocabulary=vocab, mode="apply")
        assert ds.instances[0].slots == [[vocab.unknown_ids[0]]]

    def test_malformed_line_reports_number(self, tmp_path):
        p = tmp_path / "d.txt"
        p.write_text("1,city:A\n\n# comment\nnot a line\n")
        with pytest.raises(ParseError, match="line 4"):
            parse_dataset(p, mode="build")

    def test_bad_label_rejected(self, tmp_path):
        p = tmp_path / "d.txt"
        p.write_text("2,city:A\n")
        with pytest.raises(ParseError):
            parse_dataset(p, mode="build")

    def test_multi_hot_slot(self, tmp_path):
        p = tmp_path / "d.txt"
        p.write_text("1,tag:x,tag:y,city:A\n")
        ds = parse_dataset(p, mode="build")
        assert len(ds.instances[0].slots[0]) == 2

    def test_round_trip_identity(self, tmp_path):
        p = tmp_path / "d.txt"
        p.write_text("1,city:A,age:30\n0,city:B,age:40\n1,city:A,age:40\n")
        ds = parse_dataset(p, mode="build")
        q = tmp_path / "q.txt"
        serialize_dataset(ds, q)
        ds2 = parse_dataset(q, vocabulary=ds.vocabulary, mode="apply")
        assert [(i.label, i.slots) for i in ds.instances] == \
               [(i.label, i.slots) for i in ds2.instances]


class TestVocabularyFile:
    def test_round_trip(self, tmp_path):
        vocab = build_vocabulary([{"a": ["x", "y"], "b": ["z"]}], ["a", "b"])
        p = tmp_path / "v.txt"
        save_vocabulary(vocab, p)
        loaded = load_vocabulary(p)
        assert loaded.fields == vocab.fields
        assert loaded.id_to_value == vocab.id_to_value
        assert loaded.frequency.tolist() == vocab.frequency.tolist()
        assert loaded.unknown_ids == vocab.unknown_ids


class TestSplit:
    def _dataset(self, n=10):
        return generate_synthetic(SyntheticSpec(num_instances=n, values_per_field=5, seed=0))

    def test_8_1_1(self):
        a, b, c = split_dataset(self._dataset(10), (0.8, 0.1, 0.1), seed=0)
        assert (len(a.instances), len(b.instances), len(c.instances)) == (8, 1, 1)

    def test_7_1_2(self):
        a, b, c = split_dataset(self._dataset(10), (0.7, 0.1, 0.2), seed=0)
        assert (len(a.instances), len(b.instances), len(c.instances)) == (7, 1, 2)

    def test_deterministic(self):
        ds = self._dataset(50)
        s1 = split_dataset(ds, (0.8, 0.1, 0.1), seed=7)
        s2 = split_dataset(ds, (0.8, 0.1, 0.1), seed=7)
        for a, b in zip(s1, s2):
            assert [id(x) for x in a.instances] == [id(x) for x in b.instances]

    def test_partition(self):
        ds = self._dataset(53)
        parts = split_dataset(ds, (0.6, 0.2, 0.2), seed=3)
        seen = [id(x) for p in parts for x in p.instances]
        assert sorted(seen) == sorted(id(x) for x in ds.instances)

    def test_bad_ratios_rejected(self):
        with pytest.raises(ValueError):
            split_dataset(self._dataset(10), (0.5, 0.2, 0.2), seed=0)


class TestFrequencyBuckets:
    def _split_with_freqs(self, freqs):
        # one instance per occurrence: field f0, value v_i repeated freqs[i] times
        records = []
        for i, f in enumerate(freqs):
            records.extend([{"f0": [f"v{i}"]}] * f)
        vocab = build_vocabulary(records, ["f0"])
        from hyperformer.data import Dataset, SparseInstance
        insts = [SparseInstance(label=0, slots=vocab.encode_record(r)) for r in records]
        return Dataset(vocabulary=vocab, instances=insts)

    def test_sort_oracle(self):
        split = self._split_with_freqs([1, 5, 9, 10])
        buckets = compute_frequency_buckets(split, 2)
        v = split.vocabulary.value_to_id[0]
        assert buckets.assignment[v["v0"]] == 0 and buckets.assignment[v["v1"]] == 0
        assert buckets.assignment[v["v2"]] == 1 and buckets.assignment[v["v3"]] == 1

    def test_tie_rule_by_id(self):
        split = self._split_with_freqs([2, 2, 2, 2])
        buckets = compute_frequency_buckets(split, 2)
        v = split.vocabulary.value_to_id[0]
        assert buckets.assignment[v["v0"]] == 0 and buckets.assignment[v["v3"]] == 1

    def test_bucket_count_one_rejected(self):
        split = self._split_with_freqs([1, 2])
        with pytest.raises(ValueError):
            compute_frequency_buckets(split, 1)

    def test_too_few_ids_rejected(self):
        split = self._split_with_freqs([3, 3])
        with pytest.raises(ValueError):
            compute_frequency_buckets(split, 5)

    def test_monotone(self):
        split = generate_synthetic(SyntheticSpec(num_instances=300, seed=1))
        buckets = compute_frequency_buckets(split, 4)
        present = np.flatnonzero(buckets.frequency > 0)
        for a in present:
            for b in present:
                if buckets.frequency[a] < buckets.frequency[b]:
                    assert buckets.assignment[a] <= buckets.assignment[b]

    def test_counts_near_equal(self):
        split = generate_synthetic(SyntheticSpec(num_instances=300, seed=1))
        buckets = compute_frequency_buckets(split, 5)
        sizes = [int((buckets.assignment == b).sum()) for b in range(5)]
        assert max(sizes) - min(sizes) <= 1


class TestSynthetic:
    def test_deterministic(self):
        a = generate_synthetic(SyntheticSpec(num_instances=100, seed=5))
        b = generate_synthetic(SyntheticSpec(num_instances=100, seed=5))
        assert [(i.label, i.slots) for i in a.instances] == \
               [(i.label, i.slots) for i in b.instances]

    def test_noiseless_rule(self):
        spec = SyntheticSpec(num_instances=300, p_positive=1.0, p_negative=0.0, seed=2)
        ds = generate_synthetic(spec)
        positive = positive_value_names(spec)
        vocab = ds.vocabulary
        for inst in ds.instances:
            f0_values = {vocab.id_to_value[g] for g in inst.slots[0]}
            assert inst.label == int(bool(f0_values & positive))

    def test_power_law_tail_minority(self):
        # rarest half of the ranks carries a minority of the mass
        p = power_law_probs(1000, 1.5)
        assert p[500:].sum() < 0.5
        # and the empirical histogram agrees at generator scale
        ds = generate_synthetic(SyntheticSpec(num_instances=4000, values_per_field=40,
                                              num_fields=1, block_correlation=1.0, seed=3))
        freq = count_frequencies(ds, ds.vocabulary.num_features)
        order = np.sort(freq[freq > 0])
        rare_half = order[:len(order) // 2].sum()
        assert rare_half < 0.5 * order.sum()

    def test_all_instances_valid(self):
        ds = generate_synthetic(SyntheticSpec(num_instances=100, seed=0))
        vocab = ds.vocabulary
        for inst in ds.instances:
            for f, slot in enumerate(inst.slots):
                assert slot
                assert len(set(slot)) == len(slot)
                for gid in slot:
                    assert vocab.id_to_field[gid] == f
