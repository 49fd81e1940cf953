"""Two-stage network intrusion detection: forest gate plus BiGRU/Transformer refiner."""

__version__ = "0.1.0"
