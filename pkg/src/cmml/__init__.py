"""cmml: compile an EER conceptual model into ML-ready training datasets with full lineage."""

__version__ = "0.1.0"
