from __future__ import annotations

import pytest

from autoanalyst.corpus import load_corpus
from autoanalyst.gateway import LlmGateway

from fixture_corpus import build_fixture_tree, make_mock_script


@pytest.fixture(scope="session")
def fixture_root(tmp_path_factory) -> str:
    root = tmp_path_factory.mktemp("corpus")
    build_fixture_tree(str(root))
    return str(root)


@pytest.fixture(scope="session")
def manifest_path(fixture_root) -> str:
    return str(__import__("os").path.join(fixture_root, "manifest.json"))


@pytest.fixture(scope="session")
def corpus(manifest_path):
    return load_corpus(manifest_path)


@pytest.fixture()
def mock_script() -> dict:
    return make_mock_script()


@pytest.fixture()
def mock_gateway(mock_script) -> LlmGateway:
    return LlmGateway(mode="mock", mock_script=mock_script)
