"""Tests for ERP Intelligence Agent."""
