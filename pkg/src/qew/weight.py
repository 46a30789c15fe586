"""The weight ``m`` of the Bakry-Emery tensor, with ``m = inf`` as a tagged value."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError


@dataclass(frozen=True)
class Weight:
    """Weight ``m`` in ``(0, inf]``.

    ``reciprocal`` is exactly ``0.0`` for the infinite weight so that the
    quadratic term ``(1/m) df (x) df`` drops out without any float round-off.
    """

    value: float | None

    def __post_init__(self):
        if self.value is None:
            return
        v = float(self.value)
        if math.isinf(v) and v > 0:
            object.__setattr__(self, "value", None)
            return
        if not math.isfinite(v) or v <= 0:
            # m = 0 is not supported: 1/m has no meaning there.
            raise DomainError(f"weight must lie in (0, inf], got m={self.value!r}")
        object.__setattr__(self, "value", v)

    @classmethod
    def finite(cls, m: float) -> "Weight":
        w = cls(m)
        if w.is_infinite:
            raise DomainError("expected a finite weight")
        return w

    @classmethod
    def infinite(cls) -> "Weight":
        return cls(None)

    @classmethod
    def parse(cls, raw) -> "Weight":
        """Accept a positive number or one of ``"inf"``, ``"infinity"``, ``"∞"``."""
        if isinstance(raw, Weight):
            return raw
        if isinstance(raw, str):
            key = raw.strip().lower()
            if key in ("inf", "infinity", "∞", "+inf"):
                return cls.infinite()
            try:
                raw = float(key)
            except ValueError:
                raise DomainError(f"cannot parse weight {raw!r}") from None
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            raise DomainError(f"cannot parse weight {raw!r}")
        return cls(raw)

    @property
    def is_infinite(self) -> bool:
        return self.value is None

    @property
    def is_finite(self) -> bool:
        return self.value is not None

    @property
    def reciprocal(self) -> float:
        return 0.0 if self.value is None else 1.0 / self.value

    def __str__(self) -> str:
        return "inf" if self.value is None else f"{self.value:g}"


INF = Weight.infinite()
