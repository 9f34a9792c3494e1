"""Tests for gbdsde_lab."""
