import numpy as np
import pytest

import synthcorpus
from mocapkey import spherical


@pytest.fixture(scope="session")
def skeleton():
    return synthcorpus.skeleton()


@pytest.fixture(scope="session")
def small_windows(skeleton):
    """A handful of preprocessed 60-frame windows for unit tests."""
    out = []
    for i in range(3):
        raw = synthcorpus.make_raw_motion(skeleton, 300 + i, 720)
        out.extend(win for _, win, _ in
                   synthcorpus.make_windows(skeleton, raw, f"unit{i}.amc"))
    return out


@pytest.fixture(scope="session")
def small_sph(small_windows):
    return [spherical.sequence_to_spherical(w) for w in small_windows]


def random_spherical(seed: int, n: int, m: int, smooth: bool = True):
    """Small synthetic spherical sequence with consistent rate tracks."""
    rng = np.random.default_rng(seed)
    dt = 1.0 / 30.0
    t = np.arange(n)[:, None] * dt
    freq = rng.uniform(0.3, 1.5, size=m)
    if smooth:
        theta = 1.2 + 0.5 * np.sin(2 * np.pi * freq * t + rng.uniform(0, 6, m))
        phi = 0.8 * np.sin(2 * np.pi * freq * 0.7 * t + rng.uniform(0, 6, m))
    else:
        theta = rng.uniform(0.2, 2.9, size=(n, m))
        phi = rng.uniform(-3.0, 3.0, size=(n, m))
    theta_dot = np.gradient(theta, dt, axis=0)
    phi_dot = np.gradient(phi, dt, axis=0)
    root = np.cumsum(rng.normal(0, 0.05, size=(n, 3)), axis=0)
    parents = tuple([-1] + list(rng.integers(0, np.arange(1, m))) if m > 1 else [-1])
    return spherical.SphericalSequence(
        dt=dt, theta=theta, phi=phi, theta_dot=theta_dot, phi_dot=phi_dot,
        bone_lengths=rng.uniform(0.5, 2.0, size=m),
        joint_names=tuple(f"j{i}" for i in range(m)),
        parents=parents,
        root_positions=root,
        root_velocities=np.gradient(root, dt, axis=0),
        source=f"random{seed}")
