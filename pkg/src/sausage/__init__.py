"""Random-walk sausages, lattice potential theory and branching capacities."""

__version__ = "0.1.0"
