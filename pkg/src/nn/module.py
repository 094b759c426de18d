"""
Parameter containers shared by layers, gates and the network
"""

import logging
from typing import Dict, Iterator, Mapping, Tuple

import numpy as np

from src.engine.tensor import Parameter, get_default_dtype
from src.utils.errors import ShapeError

logger = logging.getLogger(__name__)


class Module:
    """Named parameters, named buffers and child modules with a train/eval flag"""

    def __init__(self):
        self._parameters: Dict[str, Parameter] = {}
        self._buffers: Dict[str, np.ndarray] = {}
        self._modules: Dict[str, "Module"] = {}
        self.training = True

    def register_parameter(self, name: str, value: Parameter) -> Parameter:
        value.name = value.name or name
        self._parameters[name] = value
        return value

    def register_buffer(self, name: str, value: np.ndarray) -> np.ndarray:
        self._buffers[name] = np.asarray(value, dtype=get_default_dtype())
        return self._buffers[name]

    def add_module(self, name: str, module: "Module") -> "Module":
        self._modules[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, param in self._parameters.items():
            yield f"{prefix}{name}", param
        for child_name, child in self._modules.items():
            yield from child.named_parameters(f"{prefix}{child_name}.")

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for name, buf in self._buffers.items():
            yield f"{prefix}{name}", buf
        for child_name, child in self._modules.items():
            yield from child.named_buffers(f"{prefix}{child_name}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for child in self._modules.values():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        state.update({name: b.copy() for name, b in self.named_buffers()})
        return state

    def load_state_dict(self, state: Mapping[str, np.ndarray], strict: bool = True):
        """Copy values into parameters and buffers, checking names and shapes"""
        params = dict(self.named_parameters())
        expected = set(params) | {name for name, _ in self.named_buffers()}
        if strict:
            missing = sorted(expected - set(state))
            unexpected = sorted(set(state) - expected)
            if missing or unexpected:
                raise ShapeError(f"state mismatch: missing={missing[:5]} unexpected={unexpected[:5]}")
        for name, value in state.items():
            if name in params:
                target = params[name]
                if tuple(np.shape(value)) != target.shape:
                    raise ShapeError(f"{name}: checkpoint shape {np.shape(value)} != parameter shape {target.shape}")
                target.data = np.array(value, dtype=get_default_dtype())
                target.grad = None
        self._load_buffers(state, "")
        logger.debug(f"Loaded {len(state)} tensors into {type(self).__name__}")

    def _load_buffers(self, state: Mapping[str, np.ndarray], prefix: str):
        for name in list(self._buffers):
            key = f"{prefix}{name}"
            if key in state:
                if tuple(np.shape(state[key])) != self._buffers[name].shape:
                    raise ShapeError(f"{key}: checkpoint shape {np.shape(state[key])} != buffer shape")
                self._buffers[name] = np.array(state[key], dtype=get_default_dtype())
        for child_name, child in self._modules.items():
            child._load_buffers(state, f"{prefix}{child_name}.")

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


def he_normal(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    """He-normal init, std = sqrt(2 / fan_in)"""
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
