"""Named trainable parameters and their EMA (target) copies."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, default_dtype


class ParameterStore:
    """Ordered map of name -> Tensor with an online/target role.

    Online parameters are trainable; a target store is a gradient-free
    value copy whose weights move only through EMA updates.
    """

    def __init__(self, role: str = "online"):
        if role not in ("online", "target"):
            raise ValueError(f"role must be online or target, got {role!r}")
        self.role = role
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise KeyError(f"parameter {name!r} already exists")
        t = Tensor(np.asarray(value, dtype=default_dtype()),
                   requires_grad=(self.role == "online"))
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._params[name]
        except KeyError:
            raise KeyError(f"missing parameter {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def zero_grads(self):
        for p in self._params.values():
            p.grad = None

    def gradients(self) -> dict[str, np.ndarray]:
        return {n: p.grad for n, p in self._params.items() if p.grad is not None}

    def count(self, prefix: str = "") -> int:
        return sum(p.size for n, p in self._params.items() if n.startswith(prefix))

    def subset_names(self, prefix: str) -> list[str]:
        return [n for n in self._params if n.startswith(prefix)]

    def as_target(self, prefixes=None) -> "ParameterStore":
        """Deep value copy with gradients disabled; optionally restricted to
        name prefixes (a BYOL target carries no predictor)."""
        target = ParameterStore(role="target")
        for name, p in self._params.items():
            if prefixes is None or any(name.startswith(pre) for pre in prefixes):
                target.add(name, p.data.copy())
        return target

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: p.data.copy() for n, p in self._params.items()}

    def load_state(self, state: dict[str, np.ndarray]):
        if set(state) != set(self._params):
            missing = set(self._params) - set(state)
            extra = set(state) - set(self._params)
            raise KeyError(f"parameter name mismatch (missing={sorted(missing)}, extra={sorted(extra)})")
        for name, value in state.items():
            p = self._params[name]
            if p.data.shape != value.shape:
                raise ValueError(f"shape mismatch for {name!r}: {p.data.shape} vs {value.shape}")
            p.data = value.astype(p.data.dtype, copy=True)
