"""Generative subgraph explainers for graph neural networks.

Train small base classifiers on synthetic motif datasets, fit generative
explainers (mask generation, VGAE, RL, flow matching) under pluggable
information constraints, and evaluate fidelity, efficiency, and
generalization against ground-truth motifs.
"""

__version__ = "0.1.0"

from . import constraints, container, evaluation, explainers, gnn, graphs, optim, tensor
from .errors import (ContractError, DomainError, GraphValidationError, GxError,
                     IntegrityError, NumericalError, OracleCapError, ParseError,
                     ShapeError)

__all__ = [
    "tensor", "optim", "container", "graphs", "gnn", "constraints",
    "explainers", "evaluation",
    "GxError", "ShapeError", "DomainError", "ContractError",
    "GraphValidationError", "ParseError", "IntegrityError", "NumericalError",
    "OracleCapError",
]
