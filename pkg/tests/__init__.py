"""
Tests module initialization
"""
