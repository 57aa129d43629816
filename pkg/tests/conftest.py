import itertools

import numpy as np
import pytest

from bosflp.instance import GeneratorParams, generate_instance, generate_scenarios, reference_instance

# small ranges keep enumeration cheap and the trees shallow
SMALL = GeneratorParams(cost=(1, 3), capacity=(20, 120), demand=(10, 60))
TIGHT = GeneratorParams(cost=(1, 5), capacity=(10, 60), demand=(10, 60))


def small_case(seed: int, n: int | None = None, samples: int | None = None, params=None):
    rng = np.random.default_rng(seed)
    n = n if n is not None else int(rng.integers(5, 11))
    samples = samples if samples is not None else int(rng.choice([2, 5, 10, 20]))
    params = params or (SMALL if seed % 2 == 0 else TIGHT)
    inst = generate_instance(n, seed, params)
    return inst, generate_scenarios(inst, samples, 0.3, 1000 + seed)


def binary_vectors(n: int):
    return [np.array(bits, dtype=float) for bits in itertools.product((0, 1), repeat=n)]


@pytest.fixture
def t1():
    return reference_instance()


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "VERDICTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.VERDICTS:
        terminalreporter.write_line(line)
