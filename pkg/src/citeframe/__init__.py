"""citeframe: two-dimensional citation annotation and evaluation toolkit."""

__version__ = "0.1.0"
