"""Joint important-token picking and utterance rewriting for multi-turn
dialogue restoration."""

__version__ = "0.1.0"
