"""Planning distributed quantum circuit execution over a quantum network."""

__version__ = "0.1.0"
