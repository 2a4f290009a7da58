from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Attribution"]


@dataclass
class Attribution:
    """A credit vector plus where it came from.

    ``sample_count`` is 0 for exact computations. ``std_err`` is only set by
    estimators that report per-coordinate standard errors.
    """

    values: np.ndarray
    method: str
    n: int
    alpha: float
    beta: float
    sample_count: int = 0
    seed: int | None = None
    std_err: np.ndarray | None = None
    constant: float | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.n,):
            raise ValueError(f"attribution has shape {self.values.shape}, expected ({self.n},)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("attribution contains non-finite values")
        if self.std_err is not None:
            self.std_err = np.asarray(self.std_err, dtype=float)

    def __len__(self) -> int:
        return self.n

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    @property
    def total(self) -> float:
        return float(self.values.sum())

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "n": self.n,
            "alpha": self.alpha,
            "beta": self.beta,
            "seed": self.seed,
            "n_samples": self.sample_count,
            "values": self.values.tolist(),
            "std_err": None if self.std_err is None else self.std_err.tolist(),
            "constant": self.constant,
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Attribution":
        return cls(
            values=np.asarray(doc["values"], dtype=float),
            method=doc["method"],
            n=int(doc["n"]),
            alpha=doc["alpha"],
            beta=doc["beta"],
            sample_count=int(doc.get("n_samples", 0)),
            seed=doc.get("seed"),
            std_err=None if doc.get("std_err") is None else np.asarray(doc["std_err"], dtype=float),
            constant=doc.get("constant"),
            extra=doc.get("extra", {}),
        )
