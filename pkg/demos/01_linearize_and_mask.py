"""Walk through the data layer: build a small knowledge graph, linearize it
with position tracking, and corrupt both the text and the graph sides.

Run:  python demos/01_linearize_and_mask.py
"""

import random

from graph2text import KnowledgeGraph, GraphTextPair, find_entity_mentions
from graph2text import linearize, unit_sequence, mask_text, mask_graph

# A graph is an entity list plus a sparse map of directed relations keyed by
# 1-based (head, tail) index pairs.
graph = KnowledgeGraph(
    entities=("alan bean", "apollo 12", "nasa"),
    relations={(1, 2): "mission", (2, 3): "operator"},
)

text = tuple("alan bean flew on the apollo 12 mission for nasa".split())
pair = GraphTextPair(graph, text, find_entity_mentions(graph.entities, text))

# Linearization emits one <H> head <R> relation <T> tail block per triple in
# ascending (head, tail) order and remembers which token positions belong to
# which entity or relation.
lin = linearize(graph)
print("linearized graph:")
print(" ", " ".join(lin.tokens))
print("entity positions:")
for i, positions in sorted(lin.entity_positions.items()):
    print(f"  e{i} {graph.entities[i - 1]!r}: {sorted(positions)}")
print("relation positions:")
for key, positions in sorted(lin.relation_positions.items()):
    print(f"  r{key} {graph.relations[key]!r}: {sorted(positions)}")

# The unit sequence (entities first, then relations) is the atom order used
# by the embedding-alignment objective.
print("\nunit sequence:", unit_sequence(graph))

# Text-side corruption: entity-mention tokens masked with probability 0.4,
# everything else with 0.2, and neighbouring masks merged into one.
rng = random.Random(7)
masked_text = mask_text(pair, rng)
print("\noriginal text: ", " ".join(masked_text.original))
print("corrupted text:", " ".join(masked_text.corrupted))

# Graph-side corruption works on whole units and preserves length, so the
# per-position reconstruction loss stays aligned.
masked_graph = mask_graph(lin, rng)
print("\ncorrupted graph:", " ".join(masked_graph.corrupted))
print("mask indicators:", list(masked_graph.indicators))
