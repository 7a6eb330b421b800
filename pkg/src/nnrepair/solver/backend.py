"""Pluggable MIQP engines.

An engine is any object with ``solve(model, params)`` and
``check_feasibility(model, params)`` returning :class:`SolveResult`.
"""
from __future__ import annotations

from abc import ABC, abstractmethod

from ..model import MiqpModel
from .bnb import BranchAndBound, SolveParams, SolveResult


class SolverBackend(ABC):
    name = "abstract"

    @abstractmethod
    def solve(self, model: MiqpModel, params: SolveParams | None = None) -> SolveResult:
        ...

    def check_feasibility(self, model: MiqpModel, params: SolveParams | None = None) -> SolveResult:
        return self.solve(model.without_objective(), params)


SolverBackend.register(BranchAndBound)

_REGISTRY: dict[str, type] = {"bnb": BranchAndBound}


def register_backend(name: str, factory) -> None:
    _REGISTRY[name] = factory


def get_backend(backend=None):
    """Resolve ``None`` (built-in), a registered name, or an engine instance."""
    if backend is None:
        return BranchAndBound()
    if isinstance(backend, str):
        try:
            return _REGISTRY[backend]()
        except KeyError:
            raise ValueError(f"unknown solver backend {backend!r}; known: {sorted(_REGISTRY)}") from None
    return backend
