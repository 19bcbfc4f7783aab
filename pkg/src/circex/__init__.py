"""Social-public-cost and transaction-cost analytics for producer-responsibility waste systems."""

__version__ = "0.1.0"
