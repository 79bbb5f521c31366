"""Unit tests for covext modules."""
