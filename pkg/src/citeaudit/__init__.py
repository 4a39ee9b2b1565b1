"""Citation verification and hallucination-rate auditing."""

__version__ = "0.1.0"
