import numpy as np
import pytest

from advrank.data import (
    DatasetError,
    InteractionDataset,
    RawInteraction,
    ingest,
    load_split,
    parse_line,
    read_interactions,
    sample_batch,
    sample_reduced_set,
    sample_triplet,
    split_leave_one_out,
    write_split,
)
from advrank.rng import named_rng


def rec(u, i, t=None):
    return RawInteraction(str(u), str(i), t)


class TestParsing:
    def test_basic_line(self):
        assert parse_line("alice item42 17", 1) == RawInteraction("alice", "item42", 17)

    def test_no_timestamp(self):
        assert parse_line("alice item42", 1) == RawInteraction("alice", "item42", None)

    def test_comment_and_blank_skipped(self):
        assert parse_line("# header", 1) is None
        assert parse_line("   ", 2) is None

    def test_wrong_field_count(self):
        with pytest.raises(DatasetError, match="line 3"):
            parse_line("a b c d", 3)
        with pytest.raises(DatasetError, match="line 9"):
            parse_line("lonely", 9)

    def test_bad_timestamp(self):
        with pytest.raises(DatasetError, match="timestamp"):
            parse_line("a b notanint", 1)

    def test_read_file(self, tmp_path):
        path = tmp_path / "log.txt"
        path.write_text("# comment\nu1 i1 5\n\nu2 i2 3\n")
        records = read_interactions(path)
        assert records == [rec("u1", "i1", 5), rec("u2", "i2", 3)]


class TestIngest:
    def test_compaction_first_seen_order(self):
        data = ingest([rec("b", "y"), rec("a", "y"), rec("b", "x")])
        assert data.user_map == {"b": 0, "a": 1}
        assert data.item_map == {"y": 0, "x": 1}
        assert data.n_interactions == 3

    def test_repeats_merge_to_earliest(self):
        data = ingest([rec("u", "i", 50), rec("u", "j", 10), rec("u", "i", 20)])
        u = data.user_map["u"]
        by_item = dict(zip(data.positives[u], data.timestamps[u]))
        assert by_item[data.item_map["i"]] == 20
        assert by_item[data.item_map["j"]] == 10

    def test_repeats_error_when_merge_disabled(self):
        with pytest.raises(DatasetError, match="duplicate"):
            ingest([rec("u", "i"), rec("u", "i")], merge_repeats=False)

    def test_mixed_timestamp_presence_rejected(self):
        with pytest.raises(DatasetError, match="timestamps"):
            ingest([rec("u", "i", 1), rec("u", "j")])

    def test_empty_input_rejected(self):
        with pytest.raises(DatasetError, match="empty"):
            ingest([])

    def test_filters_match_bruteforce(self):
        rng = np.random.default_rng(7)
        records = []
        for _ in range(400):
            records.append(rec(f"u{rng.integers(40)}", f"i{rng.integers(30)}"))
        min_item, min_user = 3, 4
        data = ingest(records, min_item_interactions=min_item, min_user_interactions=min_user)

        # independent recount: dedupe, drop rare items, then rare users
        pairs = list(dict.fromkeys((r.user_token, r.item_token) for r in records))
        item_counts = {}
        for _, i in pairs:
            item_counts[i] = item_counts.get(i, 0) + 1
        pairs = [p for p in pairs if item_counts[p[1]] >= min_item]
        user_counts = {}
        for u, _ in pairs:
            user_counts[u] = user_counts.get(u, 0) + 1
        pairs = [p for p in pairs if user_counts[p[0]] >= min_user]

        expected = set(pairs)
        got = set()
        inv_user = {v: k for k, v in data.user_map.items()}
        inv_item = {v: k for k, v in data.item_map.items()}
        for u in range(data.n_users):
            for i in data.positives[u]:
                got.add((inv_user[u], inv_item[int(i)]))
        assert got == expected

    def test_filter_single_pass_not_fixpoint(self):
        # dropping item 'only' leaves user 'solo' with one interaction;
        # the user filter then removes them, and no second item pass runs
        records = [
            rec("solo", "only"),
            rec("solo", "shared"),
            rec("a", "shared"),
            rec("a", "common"),
            rec("b", "shared"),
            rec("b", "common"),
        ]
        data = ingest(records, min_item_interactions=2, min_user_interactions=2)
        assert "solo" not in data.user_map
        # 'shared' keeps its pre-filter count of 3, so it survives even
        # though only 2 interactions remain after the user pass
        assert "shared" in data.item_map
        assert data.n_interactions == 4

    def test_idempotent_on_filter_stable_data(self):
        records = [rec(u, i) for u in "ab" for i in "xyz"]
        once = ingest(records, min_item_interactions=2, min_user_interactions=2)
        rerun = [
            rec(tok_u, tok_i)
            for tok_u, u in once.user_map.items()
            for tok_i, i in once.item_map.items()
            if once.is_positive(u, i)
        ]
        twice = ingest(rerun, min_item_interactions=2, min_user_interactions=2)
        assert once == twice


class TestDatasetStructure:
    def test_flat_views_and_counts(self):
        data = InteractionDataset.from_pairs([(0, 1), (0, 3), (1, 0)], n_items=5)
        np.testing.assert_array_equal(data.users_flat, [0, 0, 1])
        np.testing.assert_array_equal(data.items_flat, [1, 3, 0])
        np.testing.assert_array_equal(data.item_counts(), [1, 1, 0, 1, 0])
        assert data.n_interactions == 3
        assert data.sparsity == pytest.approx(1 - 3 / 10)

    def test_membership(self):
        data = InteractionDataset.from_pairs([(0, 1), (0, 3), (1, 0)], n_items=5)
        assert data.is_positive(0, 3) and not data.is_positive(0, 2)
        got = data.contains_pairs(np.array([0, 0, 1, 1]), np.array([1, 2, 0, 4]))
        np.testing.assert_array_equal(got, [True, False, True, False])

    def test_positives_are_readonly(self):
        data = InteractionDataset.from_pairs([(0, 1)])
        with pytest.raises(ValueError):
            data.positives[0][0] = 5

    def test_user_without_interactions_rejected(self):
        with pytest.raises(DatasetError, match="no interactions"):
            InteractionDataset.from_pairs([(0, 1), (2, 1)])


class TestSplit:
    def test_latest_timestamp_held_out(self):
        data = InteractionDataset.from_pairs(
            [(0, 5), (0, 2), (0, 9)], timestamps=[10, 30, 20]
        )
        split = split_leave_one_out(data)
        assert split.test[0] == 2
        np.testing.assert_array_equal(split.train.positives[0], [5, 9])
        np.testing.assert_array_equal(split.train.timestamps[0], [10, 20])

    def test_timestamp_tie_prefers_larger_item(self):
        data = InteractionDataset.from_pairs(
            [(0, 5), (0, 2), (0, 9)], timestamps=[30, 30, 10]
        )
        split = split_leave_one_out(data)
        assert split.test[0] == 5

    def test_untimestamped_split_is_seeded(self):
        data = InteractionDataset.from_pairs([(0, i) for i in range(10)])
        a = split_leave_one_out(data, seed=3)
        b = split_leave_one_out(data, seed=3)
        assert a.test == b.test
        assert a.test[0] in range(10)
        assert any(split_leave_one_out(data, seed=s).test != a.test for s in range(4, 20))

    def test_small_users_stay_in_train(self):
        data = InteractionDataset.from_pairs([(0, 0), (1, 0), (1, 1), (1, 2)])
        split = split_leave_one_out(data, with_validation=True)
        assert 0 not in split.test and 0 not in split.validation
        assert split.n_excluded == 1
        np.testing.assert_array_equal(split.train.positives[0], [0])
        assert split.train.positives[1].size == 1

    def test_validation_disjoint_from_test(self):
        data = InteractionDataset.from_pairs(
            [(0, i) for i in range(8)], timestamps=list(range(8))
        )
        split = split_leave_one_out(data, with_validation=True, seed=1)
        assert split.test[0] == 7
        assert split.validation[0] != split.test[0]
        assert split.train.positives[0].size == 6


class TestSampling:
    def setup_method(self):
        self.data = InteractionDataset.from_pairs(
            [(u, i) for u in range(6) for i in range(u, u + 4)], n_items=12
        )

    def test_triplet_validity(self):
        rng = named_rng(0, "t")
        for _ in range(200):
            t = sample_triplet(self.data, rng=rng)
            assert self.data.is_positive(t.user, t.pos_item)
            assert not self.data.is_positive(t.user, t.neg_item)

    def test_batch_validity_and_determinism(self):
        b1 = sample_batch(self.data, 64, named_rng(5, "s"))
        b2 = sample_batch(self.data, 64, named_rng(5, "s"))
        np.testing.assert_array_equal(b1.users, b2.users)
        np.testing.assert_array_equal(b1.neg_items, b2.neg_items)
        assert self.data.contains_pairs(b1.users, b1.pos_items).all()
        assert not self.data.contains_pairs(b1.users, b1.neg_items).any()

    def test_reduced_set_covers_every_interaction(self):
        probe = sample_reduced_set(self.data, named_rng(2, "p"))
        assert len(probe) == self.data.n_interactions
        np.testing.assert_array_equal(probe.users, self.data.users_flat)
        np.testing.assert_array_equal(probe.pos_items, self.data.items_flat)
        assert not self.data.contains_pairs(probe.users, probe.neg_items).any()

    def test_no_negative_available(self):
        tiny = InteractionDataset.from_pairs([(0, 0), (0, 1)], n_items=2)
        with pytest.raises(DatasetError, match="no negative"):
            sample_triplet(tiny, rng=named_rng(0, "x"))


class TestSplitIO:
    def test_roundtrip(self, tmp_path):
        data = InteractionDataset.from_pairs(
            [(u, i) for u in range(5) for i in range(u, u + 5)],
            n_items=12,
            timestamps=list(range(25)),
        )
        split = split_leave_one_out(data, with_validation=True, seed=9)
        prefix = tmp_path / "ds"
        write_split(split, prefix)
        loaded = load_split(prefix)
        assert loaded.train == split.train
        assert loaded.test == split.test
        assert loaded.validation == split.validation

    def test_token_maps_roundtrip(self, tmp_path):
        data = ingest([rec("alice", "zebra", 2), rec("alice", "yak", 1), rec("bob", "zebra", 3)])
        split = split_leave_one_out(data)
        write_split(split, tmp_path / "m")
        loaded = load_split(tmp_path / "m")
        assert loaded.train.user_map == {"alice": 0, "bob": 1}
        assert loaded.train.item_map == {"zebra": 0, "yak": 1}

    def test_missing_file_errors(self, tmp_path):
        with pytest.raises(OSError):
            load_split(tmp_path / "absent")
