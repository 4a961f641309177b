"""Linear-SDE score-based generative modeling toolkit."""

__version__ = "0.1.0"
