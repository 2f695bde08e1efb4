"""Configuration: constants, layered YAML defaults and named scenarios."""
