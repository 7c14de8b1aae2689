"""
Numerical laboratory for the 2D cubic Zakharov-Kuznetsov equation.
"""

__version__ = '21.3.1'
