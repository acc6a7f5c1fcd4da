import os
import sys

import pytest
import torch

sys.path.insert(0, os.path.dirname(__file__))

torch.set_num_threads(2)


@pytest.fixture(scope="session")
def tiny_arch():
    from segsynth.networks import ArchConfig

    return ArchConfig(image_size=16, n_s=3, n_c=2, n_z=8, base_channels=4)


@pytest.fixture(scope="session")
def small_arch():
    from segsynth.networks import ArchConfig

    return ArchConfig(image_size=32, n_s=4, n_c=3, n_z=16, base_channels=8)


@pytest.fixture(scope="session")
def small_shapes_dataset():
    from segsynth.data import ShapesConfig, generate_shapes_dataset

    return generate_shapes_dataset(ShapesConfig(image_size=32, n_samples=48, seed=7))
