import numpy as np
import pytest

from pursuitlab.buffers import ReplayBuffer, RolloutBuffer, Transition


def make_transition(tag: int) -> Transition:
    return Transition(
        obs=np.array([float(tag)]),
        action=tag % 5,
        reward=float(tag),
        next_obs=np.array([float(tag + 1)]),
        done=False,
        truncated=False,
    )


class TestRolloutBuffer:
    def test_fill_signal_at_capacity(self):
        buf = RolloutBuffer(512)
        for i in range(511):
            assert buf.record(make_transition(i)) is False
        assert buf.record(make_transition(511)) is True

    def test_single_record(self):
        buf = RolloutBuffer(512)
        assert buf.record(make_transition(0)) is False
        assert len(buf) == 1

    def test_record_into_full_raises(self):
        buf = RolloutBuffer(2)
        buf.record(make_transition(0))
        buf.record(make_transition(1))
        with pytest.raises(RuntimeError):
            buf.record(make_transition(2))

    def test_exactly_twenty_full_signals_over_10240_steps(self):
        buf = RolloutBuffer(512)
        fills = 0
        for i in range(10_240):
            if buf.record(make_transition(i)):
                fills += 1
                buf.clear()
        assert fills == 10_240 // 512 == 20

    def test_minibatches_partition_all_indices(self):
        buf = RolloutBuffer(512)
        for i in range(512):
            buf.record(make_transition(i))
        batches = buf.minibatch_indices(64, np.random.default_rng(0))
        assert len(batches) == 8
        assert all(len(b) == 64 for b in batches)
        merged = np.concatenate(batches)
        assert sorted(merged.tolist()) == list(range(512))

    def test_minibatches_require_full_buffer(self):
        buf = RolloutBuffer(512)
        buf.record(make_transition(0))
        with pytest.raises(RuntimeError):
            buf.minibatch_indices(64, np.random.default_rng(0))

    def test_different_seeds_give_different_permutations(self):
        buf = RolloutBuffer(64)
        for i in range(64):
            buf.record(make_transition(i))
        perms = set()
        for seed in range(10):
            batches = buf.minibatch_indices(8, np.random.default_rng(seed))
            perms.add(tuple(np.concatenate(batches).tolist()))
        assert len(perms) == 10


class TestReplayBuffer:
    def test_eviction_after_capacity(self):
        buf = ReplayBuffer(10_000)
        for i in range(10_001):
            buf.insert(make_transition(i))
        assert len(buf) == 10_000
        rewards = {t.reward for t in buf.contents_in_order()}
        assert 0.0 not in rewards
        assert 10_000.0 in rewards

    def test_small_fill(self):
        buf = ReplayBuffer(10_000)
        for i in range(5):
            buf.insert(make_transition(i))
        assert len(buf) == 5

    def test_contents_are_sliding_window_of_insertions(self):
        # Oracle: a plain list truncated to its last `capacity` entries.
        rng = np.random.default_rng(5)
        buf = ReplayBuffer(50)
        inserted = []
        for i in range(int(rng.integers(120, 300))):
            buf.insert(make_transition(i))
            inserted.append(i)
            window = inserted[-50:]
            got = [int(t.reward) for t in buf.contents_in_order()]
            assert got == window

    def test_sample_requires_enough_contents(self):
        buf = ReplayBuffer(10)
        buf.insert(make_transition(0))
        with pytest.raises(RuntimeError):
            buf.sample(3, np.random.default_rng(0))

    def test_sampled_elements_are_stored_elements(self):
        buf = ReplayBuffer(64)
        for i in range(64):
            buf.insert(make_transition(i))
        stored = {id(t) for t in buf.contents_in_order()}
        batch = buf.sample(64, np.random.default_rng(1))
        assert len(batch) == 64
        assert all(id(t) in stored for t in batch)

    def test_sampling_is_near_uniform(self):
        buf = ReplayBuffer(10)
        for i in range(10):
            buf.insert(make_transition(i))
        rng = np.random.default_rng(7)
        counts = np.zeros(10)
        draws = 100_000
        for _ in range(draws // 10):
            for t in buf.sample(10, rng):
                counts[int(t.reward)] += 1
        freqs = counts / draws
        assert ((freqs >= 0.09) & (freqs <= 0.11)).all()
