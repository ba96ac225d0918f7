import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from milab.dataset import (MembershipBitmap, build_balanced_eval_set,
                           generate_synthetic, load_dataset_csv, load_split_json,
                           sample_training_set, save_dataset_csv, save_split_json,
                           split_three_way, POOL_GENERAL, POOL_HOLDOUT)


def test_zero_spread_collapses_to_class_means():
    ds = generate_synthetic(2, 1, 3, cluster_spread=0.0, seed=11)
    for c in range(2):
        feats = ds.features[ds.labels == c]
        assert np.all(feats == feats[0])


def test_generation_deterministic():
    a = generate_synthetic(10, 20, 100, 1.0, seed=7)
    b = generate_synthetic(10, 20, 100, 1.0, seed=7)
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.labels, b.labels)


def test_nearest_centroid_oracle_separates_tight_clusters():
    # independent oracle: class centroids from one half classify the other
    ds = generate_synthetic(10, 20, 100, cluster_spread=0.1, seed=7)
    train_mask = np.tile(np.arange(100) < 50, 10)
    centroids = np.stack([ds.features[(ds.labels == c) & train_mask].mean(axis=0)
                          for c in range(10)])
    hold_X = ds.features[~train_mask]
    hold_y = ds.labels[~train_mask]
    d2 = ((hold_X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    acc = (d2.argmin(axis=1) == hold_y).mean()
    assert acc >= 0.99


def test_generation_rejects_bad_sizes():
    with pytest.raises(ValueError):
        generate_synthetic(1, 20, 100, 1.0, 0)
    with pytest.raises(ValueError):
        generate_synthetic(10, 0, 100, 1.0, 0)
    with pytest.raises(ValueError):
        generate_synthetic(10, 20, 0, 1.0, 0)
    with pytest.raises(ValueError):
        generate_synthetic(10, 20, 100, -0.5, 0)


def test_split_sizes_20000():
    ds = generate_synthetic(10, 5, 2000, 1.0, seed=0)
    plan = split_three_way(ds, 5000, seed=1)
    assert len(plan.eval_ids) == 5000
    assert len(plan.general_ids) == 7500
    assert len(plan.holdout_ids) == 7500


def test_split_small_remainder_goes_to_general():
    ds = generate_synthetic(2, 1, 5, 1.0, seed=0)  # 10 instances
    plan = split_three_way(ds, 4, seed=3)
    assert (len(plan.eval_ids), len(plan.general_ids), len(plan.holdout_ids)) == (4, 3, 3)


def test_split_deterministic_and_validated():
    ds = generate_synthetic(3, 2, 10, 1.0, seed=0)
    p1 = split_three_way(ds, 10, seed=5)
    p2 = split_three_way(ds, 10, seed=5)
    assert np.array_equal(p1.eval_ids, p2.eval_ids)
    assert np.array_equal(p1.general_ids, p2.general_ids)
    with pytest.raises(ValueError):
        split_three_way(ds, 7, seed=0)     # odd
    with pytest.raises(ValueError):
        split_three_way(ds, 30, seed=0)    # too large


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32), eval_half=st.integers(1, 8))
def test_split_parts_disjoint_property(seed, eval_half):
    ds = generate_synthetic(4, 3, 10, 1.0, seed=1)
    plan = split_three_way(ds, 2 * eval_half, seed=seed)
    e, g, h = map(set, (plan.eval_ids.tolist(), plan.general_ids.tolist(),
                        plan.holdout_ids.tolist()))
    assert not (e & g) and not (e & h) and not (g & h)
    assert (e | g | h) <= set(range(len(ds)))


def test_sample_training_set_arithmetic():
    ds = generate_synthetic(3, 2, 3, 1.0, seed=0)  # n=9 -> eval 4, G 3, H 2
    plan = split_three_way(ds, 4, seed=2)
    idx, bitmap = sample_training_set(plan, POOL_GENERAL, 3, seed=9)
    assert len(idx) == 3
    assert bitmap.popcount == 2
    eval_members = set(idx) & set(plan.eval_ids.tolist())
    assert len(eval_members) == 2


def test_target_never_touches_holdout_and_vice_versa():
    ds = generate_synthetic(5, 4, 200, 1.0, seed=0)
    plan = split_three_way(ds, 200, seed=2)
    tgt_idx, _ = sample_training_set(plan, POOL_GENERAL, 150, seed=1)
    shd_idx, _ = sample_training_set(plan, POOL_HOLDOUT, 150, seed=2)
    assert not (set(tgt_idx.tolist()) & set(plan.holdout_ids.tolist()))
    assert not (set(shd_idx.tolist()) & set(plan.general_ids.tolist()))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32))
def test_bitmap_popcount_always_half(seed):
    ds = generate_synthetic(3, 2, 40, 1.0, seed=4)
    plan = split_three_way(ds, 20, seed=1)
    _, bitmap = sample_training_set(plan, POOL_HOLDOUT, 30, seed=seed)
    assert bitmap.popcount == 10


def test_sample_training_set_pool_exhaustion():
    ds = generate_synthetic(2, 2, 5, 1.0, seed=0)
    plan = split_three_way(ds, 4, seed=0)
    with pytest.raises(ValueError):
        sample_training_set(plan, POOL_HOLDOUT, 20, seed=0)
    with pytest.raises(ValueError):
        sample_training_set(plan, POOL_GENERAL, 1, seed=0)  # below |E|/2


def test_balanced_eval_set_exact_balance():
    ds = generate_synthetic(10, 5, 2000, 1.0, seed=3)
    plan = split_three_way(ds, 5000, seed=4)
    _, bitmap = sample_training_set(plan, POOL_GENERAL, 3000, seed=5)
    ev = build_balanced_eval_set(ds, plan, bitmap)
    assert len(ev) == 5000
    assert ev.is_member.sum() == 2500
    assert (~ev.is_member).sum() == 2500


def test_balanced_eval_two_instances():
    ds = generate_synthetic(2, 2, 3, 1.0, seed=0)
    plan = split_three_way(ds, 2, seed=0)
    bitmap = MembershipBitmap(member_flags=np.array([True, False]))
    ev = build_balanced_eval_set(ds, plan, bitmap)
    pairs = list(ev)
    assert [m for _, m in pairs] == [True, False]


def test_unbalanced_bitmap_rejected():
    ds = generate_synthetic(2, 2, 3, 1.0, seed=0)
    plan = split_three_way(ds, 4, seed=0)
    with pytest.raises(ValueError):
        build_balanced_eval_set(ds, plan, MembershipBitmap(np.array([True] * 3 + [False])))


def test_csv_round_trip_bit_exact(tmp_path):
    ds = generate_synthetic(4, 7, 25, 1.3, seed=99)
    path = tmp_path / "data.csv"
    save_dataset_csv(ds, path)
    back = load_dataset_csv(path)
    assert np.array_equal(ds.features, back.features)
    assert np.array_equal(ds.labels, back.labels)
    assert back.num_classes == ds.num_classes


def test_split_manifest_round_trip(tmp_path):
    ds = generate_synthetic(3, 2, 20, 1.0, seed=1)
    plan = split_three_way(ds, 10, seed=77)
    path = tmp_path / "split.json"
    save_split_json(plan, path)
    back = load_split_json(path)
    assert back.seed == 77
    assert np.array_equal(plan.eval_ids, back.eval_ids)
    assert np.array_equal(plan.general_ids, back.general_ids)
    assert np.array_equal(plan.holdout_ids, back.holdout_ids)
