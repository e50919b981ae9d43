"""causalaug: knowledge-guided, dual-learning data augmentation for event causality identification."""

__version__ = "0.1.0"
