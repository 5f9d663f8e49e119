"""Radial fast diffusion: Barenblatt profiles, an implicit solver and extinction diagnostics."""
