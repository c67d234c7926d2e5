"""Behavioural preorders, logics and distances for weighted and semi-Markov systems."""

__version__ = "0.1.0"
