import numpy as np
import pytest

from nuggetcut.phantom import NeedleSpec, PhantomSpec, make_phantom


SPHERE_CENTER = (32.0, 32.0, 32.0)
SPHERE_RADIUS = 20.0


def sphere_spec(noise_sigma=0.0, rng_seed=7, radius=SPHERE_RADIUS):
    return PhantomSpec(
        dims=(64, 64, 64),
        spacing=(1.0, 1.0, 1.0),
        lesion_center=SPHERE_CENTER,
        lesion_radii=(radius, radius, radius),
        noise_sigma=noise_sigma,
        rng_seed=rng_seed,
    )


def needle_spec(noise_sigma=0.0):
    return PhantomSpec(
        dims=(64, 64, 64),
        spacing=(1.0, 1.0, 1.0),
        lesion_center=SPHERE_CENTER,
        lesion_radii=(20.0, 20.0, 20.0),
        needle=NeedleSpec(direction=(1.0, 0.0, 0.0), shaft_radius_mm=0.6,
                          tine_count=2, tine_length_mm=12.0, value=1500),
        noise_sigma=noise_sigma,
        rng_seed=3,
    )


@pytest.fixture(scope="session")
def sphere_phantom():
    return make_phantom(sphere_spec())


@pytest.fixture(scope="session")
def sphere_phantom_noisy():
    return make_phantom(sphere_spec(noise_sigma=5.0))


@pytest.fixture(scope="session")
def needle_phantom():
    return make_phantom(needle_spec())


def dsc_against(mask, truth) -> float:
    inter = int(np.count_nonzero(mask.bits & truth.bits))
    return 2.0 * inter / (mask.voxel_count + truth.voxel_count)
