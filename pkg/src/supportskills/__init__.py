"""Mine intervention units into skill prototypes, maintain SKILL.md banks, and evolve them
under simulation-based verification."""

__version__ = "0.1.0"
