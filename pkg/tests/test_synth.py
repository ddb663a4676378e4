"""Synthetic benchmark generator: group geometry, determinism, both output
kinds."""

import numpy as np
import pytest

from h3mkit import SequenceDataset, synth_benchmark


class TestSynthBenchmark:
    def test_zero_separation_identical_prototypes(self):
        rng = np.random.default_rng(0)
        members, labels = synth_benchmark(3, 2, 0.0, rng)
        means = [
            np.stack([c.mean for g in m.emissions for c in g.components]) for m in members
        ]
        for other in means[1:]:
            np.testing.assert_array_equal(means[0], other)

    def test_group_offsets(self):
        rng = np.random.default_rng(1)
        members, labels = synth_benchmark(4, 5, 4.0, rng, n_states=2, dim=1)
        assert len(members) == 20
        np.testing.assert_array_equal(labels, np.repeat(np.arange(4), 5))
        # Group centers land at -6, -2, +2, +6 along the first dimension.
        for g in range(4):
            group_means = [
                float(np.mean([c.mean[0] for gm in m.emissions for c in gm.components]))
                for m, lab in zip(members, labels)
                if lab == g
            ]
            center = (g - 1.5) * 4.0
            assert abs(np.mean(group_means) - center) < 0.5

    def test_members_are_valid_and_jittered(self):
        rng = np.random.default_rng(2)
        members, _ = synth_benchmark(2, 3, 4.0, rng, n_states=2)
        for m in members:
            assert m.initial.sum() == pytest.approx(1.0, abs=1e-12)
            np.testing.assert_allclose(m.transitions.sum(axis=1), 1.0, atol=1e-12)
        assert not np.array_equal(members[0].transitions, members[1].transitions)

    def test_seed_determinism(self):
        a, _ = synth_benchmark(2, 2, 4.0, np.random.default_rng(42))
        b, _ = synth_benchmark(2, 2, 4.0, np.random.default_rng(42))
        for ma, mb in zip(a, b):
            np.testing.assert_array_equal(ma.initial, mb.initial)
            np.testing.assert_array_equal(ma.transitions, mb.transitions)
            for ga, gb in zip(ma.emissions, mb.emissions):
                for ca, cb in zip(ga.components, gb.components):
                    np.testing.assert_array_equal(ca.mean, cb.mean)

    def test_sequences_kind(self):
        rng = np.random.default_rng(3)
        dataset, labels = synth_benchmark(
            2, 4, 6.0, rng, n_states=2, dim=2, tau=7, kind="sequences"
        )
        assert isinstance(dataset, SequenceDataset)
        assert len(dataset) == 8
        assert dataset.labels == [str(g) for g in labels]
        for seq in dataset.sequences:
            assert seq.observations.shape == (7, 2)

    def test_bad_arguments(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            synth_benchmark(1, 2, 4.0, rng)
        with pytest.raises(ValueError):
            synth_benchmark(2, 0, 4.0, rng)
        with pytest.raises(ValueError):
            synth_benchmark(2, 2, 4.0, rng, kind="graphs")
