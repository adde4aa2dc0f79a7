"""
Setup script for synprune

Note: This setup.py is optional. The project is configured in pyproject.toml;
this file only serves tools that still call setup.py directly.
"""

from setuptools import setup

setup()
