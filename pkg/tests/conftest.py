import pytest
from hypothesis import HealthCheck, settings

from graphcoref import ClusterSet, Document, EncoderConfig, Vocab, init_params

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_CRITERIA = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_CRITERIA] = []


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_CRITERIA, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(request, capsys):
    """Record and print one PASS/FAIL line for an acceptance criterion."""
    def report(name: str, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
        request.config.stash[_CRITERIA].append(line)
        with capsys.disabled():
            print(f"\n{line}")
        return ok
    return report


@pytest.fixture
def tiny_doc():
    # entity 1: (0,2) and (4,4); entity 2: (6,7) alone
    return Document("tiny", ("N1", "m0", "z1", "w3", "P1", "w2", "N2", "z0"),
                    gold=ClusterSet([[(0, 2), (4, 4)], [(6, 7)]]))


@pytest.fixture
def tiny_params(tiny_doc):
    vocab = Vocab.from_documents([tiny_doc])
    cfg = EncoderConfig(layers=1, heads=2, d_model=8, d_ff=16, vocab=len(vocab), max_positions=16)
    return init_params(cfg, vocab, 0)
