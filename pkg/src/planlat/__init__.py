"""Plan-structured neural networks for query latency prediction."""

__version__ = "0.1.0"
