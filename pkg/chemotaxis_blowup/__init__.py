"""Chemotaxis Blow-up Toolkit - tumor-immune chemotaxis simulation and blow-up bounds."""

__version__ = "0.1.0"
__author__ = "Chemotaxis Blow-up Developers"
