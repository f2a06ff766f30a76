"""End-to-end tests that run the full pipeline on generated corpora."""
