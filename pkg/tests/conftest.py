import numpy as np
import pytest

from agsp.data import SynthConfig, generate_synthetic
from agsp.numeric import Rng


@pytest.fixture
def tiny_dataset():
    cfg = SynthConfig(n=40, dims={"text": 5, "image": 4, "audio": 3},
                      separability={"text": 1.0, "image": 1.0, "audio": 0.0}, dropout=0.2)
    return generate_synthetic(cfg, Rng(1))


def random_graph_adjacency(rng: np.random.Generator, n: int, p: float = 0.5) -> np.ndarray:
    w = rng.uniform(0.05, 1.0, (n, n)) * (rng.uniform(size=(n, n)) < p)
    w = np.triu(w, 1)
    return w + w.T


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, ok: bool, detail: str) -> str:
    line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
