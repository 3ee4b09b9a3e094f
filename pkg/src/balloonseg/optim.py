"""Adam with standard bias correction.

Weight decay is not folded in here: the L2 penalty contributes to the loss
and its gradient (2*lambda*w) is added to the regularized kernels before
``step`` runs, exactly like any other gradient term.
"""

from __future__ import annotations

import numpy as np

from .tensor import LayerParams


def adam_update(value: np.ndarray, grad: np.ndarray, m: np.ndarray, v: np.ndarray,
                t: int, lr: float, beta1: float, beta2: float, epsilon: float) -> None:
    """One in-place Adam update; ``m`` and ``v`` are mutated too."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    mhat = m / (1.0 - beta1 ** t)
    vhat = v / (1.0 - beta2 ** t)
    value -= lr * mhat / (np.sqrt(vhat) + epsilon)


class Adam:
    def __init__(self, params: list[LayerParams], lr: float = 0.001,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self._state: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def _moments(self, tensor) -> tuple[np.ndarray, np.ndarray]:
        key = id(tensor)
        if key not in self._state:
            self._state[key] = (np.zeros_like(tensor.data), np.zeros_like(tensor.data))
        return self._state[key]

    def step(self) -> None:
        self.t += 1
        for p in self.params:
            for _, tensor in p.tensors():
                if tensor.grad is None:
                    continue
                m, v = self._moments(tensor)
                adam_update(tensor.data, tensor.grad, m, v, self.t,
                            self.lr, self.beta1, self.beta2, self.epsilon)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()
