"""
Tests for the senn-rl training, explanation and persistence pipeline.
"""
