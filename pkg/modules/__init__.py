"""
Cognitive Load Market Laboratory Modules
"""
