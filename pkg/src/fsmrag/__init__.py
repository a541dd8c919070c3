"""FSM-driven knowledge agent: retrieval tools, step feedback, data export."""

__version__ = "0.1.0"
