"""Command-line runner: configuration, orchestration and output files."""
