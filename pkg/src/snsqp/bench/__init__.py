"""Benchmark problems, reference oracles, the experiment runner and the CLI."""
