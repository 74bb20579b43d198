"""springbok: planning and compliance-aware control for explosive quadruped
jumping with parallel elastic joints, closed over a deterministic simulator."""

__version__ = "0.1.0"
