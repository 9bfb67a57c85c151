"""Odoscale core: pose algebra, metrics, rotation uncertainty, losses and curation."""
