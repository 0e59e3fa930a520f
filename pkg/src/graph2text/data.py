"""Knowledge-graph data model, triple linearization, and corpus loading.

Positions are 1-based everywhere in this module: token 1 is the first token
of a sequence. The tensor layer converts to 0-based row indices internally.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import CorpusParseError, GraphHasNoTriples

HEAD_MARKER = "<H>"
RELATION_MARKER = "<R>"
TAIL_MARKER = "<T>"
MARKERS = (HEAD_MARKER, RELATION_MARKER, TAIL_MARKER)


@dataclass(frozen=True)
class KnowledgeGraph:
    """Entity list plus a sparse map of directed relations.

    ``entities[i-1]`` is the surface string of entity i (1-based), and
    ``relations[(i, j)]`` is the surface string of the relation from entity i
    to entity j. Self-loops are allowed. Every entity must take part in at
    least one triple, otherwise it could never receive a position in the
    linearized sequence.
    """

    entities: tuple[str, ...]
    relations: dict[tuple[int, int], str] = field(compare=False)

    def __init__(self, entities, relations):
        object.__setattr__(self, "entities", tuple(entities))
        object.__setattr__(
            self, "relations", {(int(i), int(j)): r for (i, j), r in dict(relations).items()}
        )
        self._validate()

    def _validate(self):
        if not self.entities:
            raise ValueError("entity list must be non-empty")
        for k, ent in enumerate(self.entities, start=1):
            if not str(ent).split():
                raise ValueError(f"entity {k} has an empty surface string")
        if not self.relations:
            raise GraphHasNoTriples("graph has no triples")
        n = len(self.entities)
        referenced = set()
        for (i, j), rel in self.relations.items():
            if not (1 <= i <= n and 1 <= j <= n):
                raise ValueError(f"relation ({i}, {j}) references a missing entity (|V|={n})")
            if not str(rel).split():
                raise ValueError(f"relation ({i}, {j}) has an empty surface string")
            referenced.update((i, j))
        missing = set(range(1, n + 1)) - referenced
        if missing:
            raise ValueError(f"entities {sorted(missing)} appear in no triple")

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    def triples(self) -> list[tuple[int, str, int]]:
        """All (head, relation, tail) triples in ascending (i, j) order."""
        return [(i, self.relations[(i, j)], j) for (i, j) in sorted(self.relations)]


@dataclass(frozen=True)
class LinearizedGraph:
    """Token sequence for a graph plus the position sets of each unit.

    ``entity_positions[i]`` is the set of 1-based token positions occupied by
    entity i across all of its occurrences; ``relation_positions[(i, j)]``
    covers only the relation's own tokens. Marker tokens belong to no unit.
    """

    tokens: tuple[str, ...]
    entity_positions: dict[int, frozenset[int]]
    relation_positions: dict[tuple[int, int], frozenset[int]]

    def __post_init__(self):
        m = len(self.tokens)
        marker_positions = {p for p, t in enumerate(self.tokens, start=1) if t in MARKERS}
        seen: set[int] = set()
        all_sets = list(self.entity_positions.items()) + list(self.relation_positions.items())
        for key, positions in all_sets:
            if not positions:
                raise ValueError(f"unit {key} has an empty position set")
            for p in positions:
                if not 1 <= p <= m:
                    raise ValueError(f"position {p} of unit {key} outside [1, {m}]")
                if p in marker_positions:
                    raise ValueError(f"unit {key} claims marker position {p}")
                if p in seen:
                    raise ValueError(f"position {p} belongs to more than one unit")
                seen.add(p)

    @property
    def m(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class GraphTextPair:
    """A knowledge graph with its target text and optional entity mentions.

    ``entity_mentions[i]`` holds the 1-based text positions whose tokens
    belong to a mention of entity i.
    """

    graph: KnowledgeGraph
    text: tuple[str, ...]
    entity_mentions: dict[int, frozenset[int]] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "text", tuple(self.text))
        if len(self.text) < 1:
            raise ValueError("text must contain at least one token")
        for i, positions in self.entity_mentions.items():
            if not 1 <= i <= self.graph.num_entities:
                raise ValueError(f"mention refers to missing entity {i}")
            for p in positions:
                if not 1 <= p <= len(self.text):
                    raise ValueError(f"mention position {p} outside [1, {len(self.text)}]")

    @property
    def n(self) -> int:
        return len(self.text)


def linearize(graph: KnowledgeGraph) -> LinearizedGraph:
    """Emit ``<H> head <R> relation <T> tail`` per triple in (i, j) order.

    Entities occurring in several triples are re-emitted each time; their
    position set is the union over all occurrences.
    """
    if not graph.relations:
        raise GraphHasNoTriples("graph has no triples")
    tokens: list[str] = []
    ent_pos: dict[int, set[int]] = {}
    rel_pos: dict[tuple[int, int], set[int]] = {}

    def emit_unit(surface: str) -> set[int]:
        positions = set()
        for tok in surface.split():
            tokens.append(tok)
            positions.add(len(tokens))
        return positions

    for i, rel, j in graph.triples():
        tokens.append(HEAD_MARKER)
        ent_pos.setdefault(i, set()).update(emit_unit(graph.entities[i - 1]))
        tokens.append(RELATION_MARKER)
        rel_pos[(i, j)] = emit_unit(rel)
        tokens.append(TAIL_MARKER)
        ent_pos.setdefault(j, set()).update(emit_unit(graph.entities[j - 1]))

    return LinearizedGraph(
        tokens=tuple(tokens),
        entity_positions={i: frozenset(p) for i, p in ent_pos.items()},
        relation_positions={k: frozenset(p) for k, p in rel_pos.items()},
    )


Unit = tuple[str, "int | tuple[int, int]"]


def unit_sequence(graph: KnowledgeGraph) -> list[Unit]:
    """Entities in index order followed by relations in ascending (i, j).

    Each element is ("entity", i) or ("relation", (i, j)); the list length is
    |V| + |E|.
    """
    units: list[Unit] = [("entity", i) for i in range(1, graph.num_entities + 1)]
    units.extend(("relation", key) for key in sorted(graph.relations))
    return units


def find_entity_mentions(entities: tuple[str, ...], text: tuple[str, ...]) -> dict[int, frozenset[int]]:
    """Exact case-folded token-sequence matches of each entity in the text."""
    folded_text = [t.casefold() for t in text]
    mentions: dict[int, frozenset[int]] = {}
    for i, ent in enumerate(entities, start=1):
        ent_toks = [t.casefold() for t in ent.split()]
        width = len(ent_toks)
        hits: set[int] = set()
        for start in range(len(folded_text) - width + 1):
            if folded_text[start : start + width] == ent_toks:
                hits.update(range(start + 1, start + width + 1))
        if hits:
            mentions[i] = frozenset(hits)
    return mentions


def _parse_record(line_no: int, record: dict) -> GraphTextPair:
    if not isinstance(record, dict):
        raise CorpusParseError(line_no, "record is not a JSON object")
    for key in ("entities", "triples", "text"):
        if key not in record:
            raise CorpusParseError(line_no, f"missing field '{key}'")

    entities = record["entities"]
    if not isinstance(entities, list) or not all(isinstance(e, str) for e in entities):
        raise CorpusParseError(line_no, "'entities' must be an array of strings")
    entities = tuple(e.casefold() for e in entities)

    relations: dict[tuple[int, int], str] = {}
    for t in record["triples"]:
        if not (isinstance(t, list) and len(t) == 3 and isinstance(t[1], str)):
            raise CorpusParseError(line_no, f"bad triple {t!r}; expected [head, relation, tail]")
        head, rel, tail = t
        if not (isinstance(head, int) and isinstance(tail, int)):
            raise CorpusParseError(line_no, f"triple indices must be integers, got {t!r}")
        if not (1 <= head <= len(entities) and 1 <= tail <= len(entities)):
            raise CorpusParseError(line_no, f"triple {t!r} references a missing entity")
        if (head, tail) in relations:
            raise CorpusParseError(line_no, f"duplicate relation for pair ({head}, {tail})")
        relations[(head, tail)] = rel.casefold()

    if not isinstance(record["text"], str):
        raise CorpusParseError(line_no, "'text' must be a string")
    text = tuple(record["text"].casefold().split())
    if not text:
        raise CorpusParseError(line_no, "'text' is empty")

    try:
        graph = KnowledgeGraph(entities, relations)
    except (ValueError, GraphHasNoTriples) as exc:
        raise CorpusParseError(line_no, str(exc)) from exc

    if "mentions" in record and record["mentions"] is not None:
        mentions: dict[int, frozenset[int]] = {}
        for key, positions in record["mentions"].items():
            try:
                idx = int(key)
            except (TypeError, ValueError):
                raise CorpusParseError(line_no, f"bad mention key {key!r}") from None
            if not (1 <= idx <= len(entities)):
                raise CorpusParseError(line_no, f"mention key {idx} references a missing entity")
            if not all(isinstance(p, int) and 1 <= p <= len(text) for p in positions):
                raise CorpusParseError(line_no, f"mention positions {positions!r} out of range")
            mentions[idx] = frozenset(positions)
    else:
        mentions = find_entity_mentions(entities, text)

    return GraphTextPair(graph=graph, text=text, entity_mentions=mentions)


def load_corpus(path) -> list[GraphTextPair]:
    """Read a JSONL corpus file; one graph-text pair per line, in file order."""
    pairs: list[GraphTextPair] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusParseError(line_no, f"invalid JSON ({exc.msg})") from exc
            pairs.append(_parse_record(line_no, record))
    return pairs
