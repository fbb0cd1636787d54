import numpy as np
import pytest

from recordgraph.corpus import Chunk
from recordgraph.providers import EmbeddingProvider, LlmClient, TokenEmbedder


@pytest.fixture
def emb():
    return EmbeddingProvider()


@pytest.fixture
def tok():
    return TokenEmbedder()


@pytest.fixture
def llm():
    return LlmClient()


def make_chunks(doc_id: str, texts: list[str]) -> list[Chunk]:
    return [Chunk(f"{doc_id}#c{i}", doc_id, (0, 0), t) for i, t in enumerate(texts)]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def built_fixture(tmp_path_factory):
    """The shipped separable dataset run through the build stage once."""
    from recordgraph import pipeline
    from recordgraph.fixtures import shipped_fixture_path

    cfg = pipeline.fixture_config(tmp_path_factory.mktemp("fixture"), shipped_fixture_path())
    pipeline.run_build(cfg)
    docs, graphs, rankings = pipeline.load_artifacts(cfg)
    return cfg, docs, graphs, rankings


@pytest.fixture(scope="session")
def trained_fixture(built_fixture):
    """Full-width training on the fixture with its preset (shared, ~15 s)."""
    from recordgraph import pipeline

    return pipeline.run_train(built_fixture[0])


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion(request):
    """Record a PASS/FAIL line for an acceptance criterion, then assert it."""

    def check(number: int, title: str, ok: bool, detail: str = "") -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title}" + (f" ({detail})" if detail else "")
        print(line)
        ACCEPTANCE_LINES.append(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
