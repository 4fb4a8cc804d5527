"""Dataset synthesis, experiment orchestration and the command-line interface."""
