"""Multi-level embedding Conformer-CTC speech recognition at desk scale."""

__version__ = "0.1.0"
