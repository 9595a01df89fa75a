"""Central-spin decoherence of mixed donor qubits in a 29Si nuclear bath."""
__version__ = "0.1.0"
