"""Proximity-aware parental-control network gateway.

Grants or restricts network access for child-accessible devices based on
guardian proximity (inferred from access-point RSSI), a guardian calendar,
and configured schedules, and compiles the resulting decisions into
firewall/DNS rule sets.
"""

__version__ = "0.1.0"
