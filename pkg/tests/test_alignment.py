from itertools import product

import numpy as np
import pytest

from latentflow import autodiff as ad
from latentflow.alignment import (
    AlignmentPath,
    NoteBoundaryConstraint,
    brute_force_align,
    duration_loss,
    durations_from_path,
    mas_align,
    mas_align_per_note,
    path_score,
)
from latentflow.exceptions import ValidationError


def single(n, t):
    return NoteBoundaryConstraint.single_note(n, t)


def test_single_token_covers_whole_range():
    ll = np.array([[0.3, -0.7, 1.2]])
    path, score = mas_align(ll, single(1, 3))
    np.testing.assert_array_equal(path.durations, [3])
    assert score == pytest.approx(ll.sum())


def test_two_token_example():
    ll = np.array([[0.0, -1.0, -5.0], [-5.0, 0.0, 0.0]])
    path, score = mas_align(ll, single(2, 3))
    np.testing.assert_array_equal(path.durations, [1, 2])
    assert score == 0.0
    assert path_score(ll, np.array([2, 1])) == -1.0


def test_note_constraint_forces_path():
    rng = np.random.default_rng(0)
    nb = NoteBoundaryConstraint([1, 2], [1, 1, 2])
    for _ in range(20):
        path, _ = mas_align(rng.standard_normal((2, 3)), nb)
        np.testing.assert_array_equal(path.durations, [2, 1])


def test_all_zero_ll_ties_break_to_earliest_boundaries():
    path, score = mas_align(np.zeros((3, 6)), single(3, 6))
    np.testing.assert_array_equal(path.durations, [1, 1, 4])
    assert score == 0.0
    bf_path, bf_score = brute_force_align(np.zeros((3, 6)), single(3, 6))
    np.testing.assert_array_equal(bf_path.durations, [1, 1, 4])
    assert bf_score == 0.0


def test_infeasible_note_names_note_id():
    nb = NoteBoundaryConstraint([5, 5, 5], [5, 5])
    with pytest.raises(ValidationError, match="note 5"):
        mas_align(np.zeros((3, 2)), nb)


def test_constraint_validation():
    with pytest.raises(ValidationError, match="non-decreasing"):
        NoteBoundaryConstraint([2, 1], [1, 2]).validate()
    with pytest.raises(ValidationError, match="sets differ"):
        NoteBoundaryConstraint([0, 1], [0, 0, 2]).validate()


def test_exhaustive_agreement_small_instances():
    values = (0.0, -1.0, 2.5)
    for n, t in ((1, 3), (2, 3), (2, 4), (3, 4)):
        nb = single(n, t)
        for cells in product(values, repeat=n * t):
            ll = np.array(cells).reshape(n, t)
            p_dp, s_dp = mas_align(ll, nb)
            p_bf, s_bf = brute_force_align(ll, nb)
            assert s_dp == s_bf
            np.testing.assert_array_equal(p_dp.durations, p_bf.durations)


def _random_constraint(rng, n, t):
    n_notes = int(rng.integers(1, n + 1))
    # split tokens and frames into n_notes contiguous groups, tokens <= frames
    while True:
        tok_cuts = np.sort(rng.choice(np.arange(1, n), size=n_notes - 1, replace=False)) if n_notes > 1 else []
        frm_cuts = np.sort(rng.choice(np.arange(1, t), size=n_notes - 1, replace=False)) if n_notes > 1 else []
        tok_counts = np.diff(np.concatenate(([0], tok_cuts, [n])))
        frm_counts = np.diff(np.concatenate(([0], frm_cuts, [t])))
        if np.all(tok_counts <= frm_counts):
            break
    token_ids = np.repeat(np.arange(n_notes), tok_counts)
    frame_ids = np.repeat(np.arange(n_notes), frm_counts)
    return NoteBoundaryConstraint(token_ids, frame_ids)


def test_randomized_agreement_with_note_constraints():
    rng = np.random.default_rng(42)
    for _ in range(1000):
        n = int(rng.integers(1, 5))
        t = int(rng.integers(n, 9))
        nb = _random_constraint(rng, n, t)
        ll = rng.standard_normal((n, t))
        p_dp, s_dp = mas_align(ll, nb)
        p_bf, s_bf = brute_force_align(ll, nb)
        assert s_dp == s_bf
        np.testing.assert_array_equal(p_dp.durations, p_bf.durations)


def test_constant_shift_changes_score_not_path():
    rng = np.random.default_rng(3)
    ll = rng.standard_normal((3, 7))
    nb = single(3, 7)
    path, score = mas_align(ll, nb)
    shifted_path, shifted_score = mas_align(ll + 2.5, nb)
    np.testing.assert_array_equal(path.durations, shifted_path.durations)
    assert shifted_score == pytest.approx(score + 2.5 * 7, rel=1e-12)


def test_per_note_decomposition_matches_global():
    rng = np.random.default_rng(4)
    for _ in range(50):
        n, t = 5, 11
        nb = _random_constraint(rng, n, t)
        ll = rng.standard_normal((n, t))
        p_global, s_global = mas_align(ll, nb)
        p_split, s_split = mas_align_per_note(ll, nb)
        assert s_global == pytest.approx(s_split, abs=1e-12)
        np.testing.assert_array_equal(p_global.durations, p_split.durations)


def test_brute_force_guard():
    with pytest.raises(ValidationError, match="guard"):
        brute_force_align(np.zeros((7, 14)), single(7, 14))


def test_durations_from_path():
    p = AlignmentPath(np.array([1, 2]))
    np.testing.assert_array_equal(durations_from_path(p), [1, 2])
    assert AlignmentPath(np.array([5])).n_frames == 5
    rng = np.random.default_rng(5)
    for _ in range(20):
        d = rng.integers(1, 5, size=4)
        assert durations_from_path(AlignmentPath(d)).sum() == d.sum()


def test_duration_loss_log_domain():
    d = np.array([1.0, 2.0, 4.0])
    assert duration_loss(d, np.log(d)) == pytest.approx(0.0)
    assert duration_loss(np.array([1.0]), np.array([1.0])) == pytest.approx(1.0)  # log 1 + 1
    rng = np.random.default_rng(6)
    for _ in range(10):
        tgt = rng.integers(1, 9, size=5).astype(float)
        pred = rng.standard_normal(5)
        expected = float(np.mean((pred - np.log(tgt)) ** 2))
        assert duration_loss(tgt, pred) == pytest.approx(expected, rel=1e-12)


def test_duration_loss_raw_domain_and_tensor_mode():
    tgt = np.array([2.0, 3.0])
    pred = np.log(np.array([2.0, 3.0]))
    assert duration_loss(tgt, pred, raw=True) == pytest.approx(0.0)
    store = ad.ParamStore()
    p = store.create("p", pred)

    def loss_fn():
        return duration_loss(tgt, p)

    assert loss_fn().item() == pytest.approx(0.0)
    assert ad.finite_diff_check(loss_fn, store) < 1e-4
    with pytest.raises(ValidationError):
        duration_loss(np.array([1.0, 2.0]), np.array([0.0]))
