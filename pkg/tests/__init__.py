"""
Tests for synprune
"""
