"""File formats, oracles, synthetic trajectories, scoring and the CLI."""
