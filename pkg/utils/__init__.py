"""
inkgen Utilities Package
"""
