"""Moment asymptotics of multitype branching random walks in random environment."""

__version__ = "0.1.0"
