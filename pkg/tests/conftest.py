import numpy as np
import pytest

from helm import bundled_hierarchy_path
from helm.data import SyntheticSpec, generate_synthetic
from helm.hierarchy import parse_hierarchy


@pytest.fixture(scope="session")
def ucm_text():
    with open(bundled_hierarchy_path("ucm")) as f:
        return f.read()


@pytest.fixture(scope="session")
def ucm(ucm_text):
    return parse_hierarchy(ucm_text)


@pytest.fixture(scope="session")
def toy():
    with open(bundled_hierarchy_path("toy")) as f:
        return parse_hierarchy(f.read())


@pytest.fixture(scope="session")
def toy_dataset(toy):
    spec = SyntheticSpec(toy, image_size=32)
    return generate_synthetic(spec, 64, seed=11)


def random_forest(rng, max_roots=3, max_children=3, max_depth=3):
    """Random small hierarchy YAML for property tests."""
    counter = [0]

    def fresh():
        counter[0] += 1
        return f"n{counter[0]}"

    def subtree(depth):
        if depth >= max_depth or rng.random() < 0.3:
            return None
        return {fresh(): subtree(depth + 1) for _ in range(rng.integers(1, max_children + 1))}

    doc = {fresh(): subtree(1) for _ in range(rng.integers(1, max_roots + 1))}

    def to_yaml(node, indent=0):
        lines = []
        for name, sub in node.items():
            if sub is None:
                lines.append(" " * indent + f"{name}:")
            else:
                lines.append(" " * indent + f"{name}:")
                lines.extend(to_yaml(sub, indent + 2))
        return lines

    return "\n".join(to_yaml(doc)) + "\n"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
