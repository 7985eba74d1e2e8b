"""Learned global ranking for structured filter pruning of small CNNs."""
