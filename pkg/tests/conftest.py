import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from graph2text.data import GraphTextPair, KnowledgeGraph, find_entity_mentions


def make_pair(entities, relations, text: str) -> GraphTextPair:
    graph = KnowledgeGraph(entities, relations)
    tokens = tuple(text.split())
    return GraphTextPair(graph, tokens, find_entity_mentions(graph.entities, tokens))


@pytest.fixture
def simple_pair() -> GraphTextPair:
    return make_pair(
        ("alan bean", "apollo 12"),
        {(1, 2): "mission"},
        "alan bean flew on apollo 12",
    )


@pytest.fixture
def two_triple_pair() -> GraphTextPair:
    return make_pair(
        ("ada", "bo", "cy"),
        {(1, 2): "likes", (2, 3): "visits"},
        "ada likes bo and bo visits cy now",
    )
