"""Cross-document event coreference over discourse trees and lexical chains.

The pipeline, end to end: ingest a mention-annotated corpus plus per-document
discourse trees, build a joint graph per document pair (two discourse
fragments bridged by cross-document lexical chains), run multi-head graph
attention over it, score mention pairs with an MLP, cluster with
group-average agglomeration, and evaluate with the standard coreference
metrics (MUC, B3, CEAF-e, CoNLL).
"""

__version__ = "0.1.0"
