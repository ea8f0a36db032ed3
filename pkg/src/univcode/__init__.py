"""Universal coding over the naturals: distribution classes, sequential
probability assignments, redundancy, capacity and an arithmetic codec."""

__version__ = "0.1.0"
