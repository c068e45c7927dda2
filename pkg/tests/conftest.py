import numpy as np
import pytest

from part2object import synth


def three_block_spec(seed=7, gap=0.14, room=None, points_per_m2=3000.0):
    """Three cuboids in a row, optionally inside a room, seen by four cameras."""
    size = 0.5
    step = size + gap
    return synth.SynthSpec(
        seed=seed,
        objects=[
            synth.SynthObject(center=(-step, 0.0, 0.25), size=(size, size, size)),
            synth.SynthObject(center=(0.0, 0.0, 0.25), size=(size, size, size)),
            synth.SynthObject(center=(step, 0.0, 0.25), size=(size, size, size)),
        ],
        room=room,
        points_per_m2=points_per_m2,
        cameras=[
            synth.look_at((0.0, -2.5, 1.5), (0.0, 0.0, 0.3)),
            synth.look_at((1.5, -2.0, 1.2), (0.0, 0.0, 0.3)),
            synth.look_at((-1.5, -2.0, 1.2), (0.0, 0.0, 0.3)),
            synth.look_at((0.0, 2.5, 1.5), (0.0, 0.0, 0.3)),
        ],
    )


@pytest.fixture(scope="session")
def three_block_scene():
    return synth.generate(three_block_spec())


def random_partition(rng, n_points, n_clusters):
    """Random labels covering every cluster id at least once."""
    labels = rng.integers(0, n_clusters, size=n_points)
    labels[rng.permutation(n_points)[:n_clusters]] = np.arange(n_clusters)
    return labels


def sets_from_labels(labels, n_clusters):
    return [np.flatnonzero(labels == c) for c in range(n_clusters)]
