"""Control-affine systems ``q' = f0(q) + sum_i u_i f_i(q)`` with ``|u| <= 1``."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import WrongDimensions
from .fieldexpr import VectorFieldExpr, linear_combination, parse_field


@dataclass(frozen=True)
class Tolerances:
    """Every numeric threshold used by a verdict or an integration.

    ``rho_tol`` is a scale factor: the singular-locus threshold at ``(q, p)``
    is ``rho_tol * (1 + |p| * max_i |f_i(q)|)``. ``tol_perp`` is scaled the
    same way by ``|p|`` and the bracket column scale. ``h_boot`` is relative
    to the horizon length.
    """

    rho_tol: float = 1e-9
    singular_tol: float = 1e-9
    margin_tol: float = 1e-9
    tol_perp: float = 1e-8
    tol_det: float = 1e-9
    rank_tol: float = 1e-9
    normalization_tol: float = 1e-9
    rtol: float = 1e-10
    atol: float = 1e-12
    event_time_tol: float = 1e-12
    h_boot: float = 1e-6
    bootstrap_tol: float = 1e-4
    gap_rtol: float = 1e-12

    def with_overrides(self, overrides: Mapping[str, Any] | None) -> "Tolerances":
        if not overrides:
            return self
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise KeyError(f"unknown tolerance keys: {sorted(unknown)}")
        return replace(self, **{k: float(v) for k, v in overrides.items()})

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


DEFAULT_TOLERANCES = Tolerances()


@dataclass(frozen=True)
class ControlAffineSystem:
    drift: VectorFieldExpr
    fields: tuple[VectorFieldExpr, ...]

    def __post_init__(self):
        if not self.fields:
            raise WrongDimensions("at least one controlled field is required")
        if any(f.n != self.drift.n for f in self.fields):
            raise WrongDimensions("drift and controlled fields live on different charts")

    @classmethod
    def from_strings(
        cls, drift: Sequence[str], fields: Sequence[Sequence[str]]
    ) -> "ControlAffineSystem":
        n = len(drift)
        return cls(parse_field(drift, n), tuple(parse_field(f, n) for f in fields))

    @property
    def n(self) -> int:
        return self.drift.n

    @property
    def k(self) -> int:
        return len(self.fields)

    @property
    def all_fields(self) -> tuple[VectorFieldExpr, ...]:
        return (self.drift,) + self.fields

    def controlled_field(self, u: Sequence[float]) -> VectorFieldExpr:
        """The autonomous field ``f0 + sum u_i f_i`` for a frozen control."""
        return linear_combination([1.0, *u], self.all_fields)

    def rotate_controls(self, O: np.ndarray) -> "ControlAffineSystem":
        """Orthogonal change of control frame ``f'_i = sum_j O[i, j] f_j``.

        Controls transform as ``u' = O u``.
        """
        O = np.asarray(O, dtype=float)
        if O.shape != (self.k, self.k):
            raise WrongDimensions("frame matrix must be k x k")
        new = tuple(linear_combination(O[i], self.fields) for i in range(self.k))
        return ControlAffineSystem(self.drift, new)

    def to_strings(self) -> tuple[list[str], list[list[str]]]:
        return self.drift.texts(), [f.texts() for f in self.fields]
