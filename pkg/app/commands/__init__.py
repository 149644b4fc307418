# File: app/commands/__init__.py (Q2FMM)
"""
One module per CLI command. Each exposes `register(subparsers)`, which adds
its sub-parser and binds the handler `cmd_<name>(config, args) -> list of
written paths`; app.main includes them in order.
"""

from app.commands import energy, estimate, hierarchy, simulate, sweep, synth

COMMAND_MODULES = (hierarchy, energy, synth, simulate, estimate, sweep)
