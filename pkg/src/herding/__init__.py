"""Measuring herding in ratings with a two-site natural experiment."""

__version__ = "0.1.0"
