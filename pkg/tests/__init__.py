"""Test suite for polygate."""
