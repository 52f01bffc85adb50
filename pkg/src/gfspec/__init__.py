"""Growth-fragmentation spectral toolkit."""
