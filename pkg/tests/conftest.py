import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from chitchat.embeddings import default_semantic_provider
from chitchat.text_pipeline import load_stopwords, normalize


@pytest.fixture(scope="session")
def stopwords():
    return load_stopwords()


@pytest.fixture(scope="session")
def semantic():
    return default_semantic_provider()


@pytest.fixture(scope="session")
def embed(stopwords, semantic):
    def _embed(text: str):
        return semantic.embed(normalize(text, stopwords))

    return _embed
