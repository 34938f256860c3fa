"""First-passage percolation on scale-free configuration models."""
