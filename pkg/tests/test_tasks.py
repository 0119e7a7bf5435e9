import re
from collections import Counter

import numpy as np
import pytest

from uoro.tasks import (
    AnBn, DistantBrackets, InfluenceBalancingTask, entropy_rate_anbn, gen_anbn,
    gen_distant_brackets, influence_loss, influence_step, make_task,
)


def test_influence_zero_is_fixed_point():
    task = InfluenceBalancingTask()
    np.testing.assert_array_equal(influence_step(task, np.zeros(23), 0.0), np.zeros(23))


def test_influence_hand_iteration():
    task = InfluenceBalancingTask(2, 1)
    s1 = influence_step(task, np.zeros(2), 1.0)
    np.testing.assert_array_equal(s1, [1.0, -1.0])
    np.testing.assert_array_equal(influence_step(task, s1, 1.0), [1.0, -1.5])


def test_influence_step_matches_model():
    task = InfluenceBalancingTask()
    model = task.model()
    s = np.random.default_rng(0).normal(size=23)
    np.testing.assert_allclose(influence_step(task, s, 0.3), model.state_forward(np.zeros(0), s, np.array([0.3])),
                               rtol=0, atol=1e-15)


@pytest.mark.parametrize("i", [0, 4, 11])
def test_influence_delay_equals_distance(i):
    # a perturbation at unit i+j reaches unit i after exactly j steps
    task = InfluenceBalancingTask()
    for j in range(1, 23 - i):
        s = np.zeros(23)
        s[i + j] = 1.0
        for step in range(1, j + 1):
            s = influence_step(task, s, 0.0)
            if step < j:
                assert s[i] == 0.0
        assert s[i] > 0.0


def test_influence_loss():
    assert influence_loss(np.array([1.0, 5.0])) == 0.0
    assert influence_loss(np.array([3.0])) == 2.0
    with pytest.raises(ValueError):
        influence_step(InfluenceBalancingTask(), np.zeros(3), 0.0)


BRACKET_RE = re.compile(r"^\[([a-j])\]([a-j]{5})\[([a-j])\]\n$")


def test_brackets_record_shape():
    d = gen_distant_brackets(1, 5, 10, seed=1)
    for r in range(200):
        m = BRACKET_RE.match(d.record(r))
        assert m and m.group(1) == m.group(3)
    assert set(d.alphabet) == set("abcdefghij[]\n")


def test_brackets_segments_identical_over_many_records():
    d = DistantBrackets(s=3, k=4, a=26, seed=9)
    for r in range(10_000):
        rec = d.record(r)
        head, tail = rec[:5], rec[9:14]
        assert head == tail and head[0] == "[" and head[-1] == "]"
        assert len(rec) == 2 * (3 + 2) + 4 + 1


@pytest.mark.slow
def test_brackets_symbols_uniform_chi_square():
    d = DistantBrackets(seed=2)
    counts = Counter()
    for r in range(100_000):
        counts.update(d.record(r)[3:8])
    n = sum(counts.values())
    expected = n / 10
    chi2 = sum((counts[c] - expected) ** 2 / expected for c in "abcdefghij")
    # chi-square with 9 dof: mean 9, sd sqrt(18)
    assert chi2 < 9 + 3 * np.sqrt(18)


def test_brackets_invalid_sizes():
    for args in [(0, 5, 10), (1, -1, 10), (1, 5, 1), (1, 5, 27)]:
        with pytest.raises(ValueError):
            DistantBrackets(*args)


def test_anbn_degenerate():
    assert gen_anbn(1, 1, seed=0).text(8) == "a\nb\na\nb\n"


def test_anbn_runs_match():
    task = AnBn(1, 32, seed=5)
    for r in range(2000):
        rec = task.record(r)
        a, b, empty = rec.split("\n")
        assert empty == "" and set(a) == {"a"} and set(b) == {"b"} and len(a) == len(b)
        assert 1 <= len(a) <= 32


@pytest.mark.slow
def test_anbn_mean_block_length():
    task = AnBn(1, 32, seed=11)
    n = np.array([task.block_length(r) for r in range(100_000)])
    sigma = np.sqrt((32 ** 2 - 1) / 12 / len(n))
    assert abs(n.mean() - 16.5) < 3 * sigma
    assert n.min() == 1 and n.max() == 32


def test_anbn_invalid():
    with pytest.raises(ValueError):
        AnBn(3, 2)
    with pytest.raises(ValueError):
        AnBn(0, 2)


def test_streams_reproducible_by_seed_and_position():
    a, b = AnBn(1, 8, seed=3), AnBn(1, 8, seed=3)
    assert a.text(500) == b.text(500)
    assert a.record(77) == b.record(77)
    assert AnBn(1, 8, seed=4).text(500) != a.text(500)


def test_pairs_are_shifted_one_hots():
    task = DistantBrackets(seed=0)
    text = task.text(30)
    for i, (x, y) in zip(range(29), task.pairs()):
        assert x.argmax() == task.encode(text[i]) and x.sum() == 1.0
        assert y == task.encode(text[i + 1])


def test_entropy_rates():
    assert entropy_rate_anbn(1, 32) == pytest.approx(1 / 7, abs=1e-12)
    assert entropy_rate_anbn(1, 32, with_memory=False) == pytest.approx(2 / 7, abs=1e-12)
    assert entropy_rate_anbn(1, 1) == 0.0
    assert entropy_rate_anbn(5, 5, with_memory=False) == 0.0
    with pytest.raises(ValueError):
        entropy_rate_anbn(4, 3)


def test_entropy_rate_against_direct_enumeration():
    # independent oracle: optimal per-char probabilities of the run-length predictor
    k, l = 2, 6
    code, length = 0.0, 0.0
    for n in range(k, l + 1):
        bits = -np.log2(1 / (l - k + 1))  # the a-run length, coded once
        code += bits / (l - k + 1)
        length += (2 * n + 2) / (l - k + 1)
    assert entropy_rate_anbn(k, l) == pytest.approx(code / length, rel=1e-12)


def test_write_and_make_task(tmp_path):
    path = tmp_path / "s.txt"
    task = make_task({"name": "anbn", "k": 1, "l": 4}, seed=2)
    task.write(path, 5)
    assert path.read_text() == "".join(task.record(r) for r in range(5))
    assert isinstance(make_task({"name": "influence_balancing"}, 0), InfluenceBalancingTask)
    with pytest.raises(ValueError):
        make_task({"name": "nope"}, 0)
