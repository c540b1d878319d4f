"""rgglab: simulation plus Monte Carlo oracle lab for subgraph counting
processes of random geometric graphs outside expanding balls."""

__version__ = "0.1.0"
