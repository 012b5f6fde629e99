"""astkit: automated sUAS simulation testing and flight-log analytics.

Blueprint generation grounded in an incident knowledge base, rule-validated
mission/simulator script generation, and automated plus interactive
flight-log analysis, all runnable offline against scripted backends.
"""

__version__ = "0.1.0"
