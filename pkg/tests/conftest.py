import numpy as np
import pytest

from gvp.energy import EnergyContext
from gvp.geometry import ShapeSpec, generate_nodes
from gvp.kernel import KernelSpec
from gvp.measures import Condenser, Plate, SignedMeasure

K23 = KernelSpec(2.0, 3)

# pass/fail lines from the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def sphere(n, center=(0.0, 0.0, 0.0), radius=1.0):
    return generate_nodes(ShapeSpec("sphere_shell", n, center=tuple(center), radius=radius))


def make_ctx(plates, a, chi=None, g=None, kernel=K23, **kw):
    c = Condenser.build(plates, a, chi=chi, g_values=g, **kw)
    return EnergyContext.build(c, kernel)


def two_spheres(n=60, a=(1.0, 1.0), chi=None, sep=2.0):
    p = Plate(sphere(n, (-sep, 0, 0)), 1)
    q = Plate(sphere(n, (sep, 0, 0)), -1)
    return make_ctx([p, q], list(a), chi=chi)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_chi(rng, k=2, box=((0, 4), (-0.5, 0.5), (3, 5))):
    pos = np.column_stack([rng.uniform(*b, size=k) for b in box])
    return SignedMeasure(pos, rng.uniform(0.2, 1.0, size=k))


def random_two_plate(rng, n=40, with_g=True, a_ell_range=(0.1, 6.0)):
    """Compact positive sphere, negative sphere flagged as plate l = 1, random chi, g and a."""
    c1 = (-rng.uniform(1.5, 3.0), rng.uniform(-0.5, 0.5), 0.0)
    c2 = (rng.uniform(1.5, 3.0), 0.0, rng.uniform(-0.5, 0.5))
    plates = [Plate(sphere(n, c1, rng.uniform(0.6, 1.2)), 1), Plate(sphere(n, c2, rng.uniform(0.6, 1.2)), -1)]
    g = [rng.uniform(0.5, 2.0, n), rng.uniform(0.5, 2.0, n)] if with_g else None
    chi = SignedMeasure(
        np.column_stack([rng.uniform(-1, 1, 2), rng.uniform(2.5, 4, 2), rng.uniform(-1, 1, 2)]),
        rng.uniform(-0.8, 0.8, 2),
    )
    a1 = rng.uniform(0.5, 2.0)
    return make_ctx(plates, [a1, rng.uniform(*a_ell_range) * a1], chi=chi, g=g)
