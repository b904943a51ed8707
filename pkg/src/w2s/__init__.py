"""w2s: a backend-pluggable engine that expands verified aerial detection
datasets into word/phrase/sentence grounding datasets, with split
construction, evaluation metrics, an annotation-quality audit harness, and
a human curation service."""

__version__ = "0.1.0"
