"""Commonsense knowledge paths for human-need classification.

Extract multi-hop ConceptNet paths that connect story text to human-need
concepts, rank them by graph centrality, and classify needs with a BiLSTM
model that attends over the selected paths.
"""

__version__ = "0.1.0"
