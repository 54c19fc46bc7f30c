"""lexigraph: hierarchical topic discovery, knowledge graphs, and grounded QA
over legal document corpora."""

__version__ = "0.1.0"
