"""Dual-band trap inverted-F antenna toolkit.

Lumped LC trap model, thin-wire moment-method solver, far-field post
processing and component-tolerance analysis.
"""

__version__ = "0.1.0"
