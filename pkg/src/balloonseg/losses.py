"""Training losses: pixel-wise binary cross entropy plus soft Dice.

Both return ``(loss, dloss/dyhat)`` so the network backward pass can be
seeded directly. The Dice denominator is the additive soft form
``sum(y^2) + sum(yhat^2)``; the product-of-sums variant (which cannot reach
zero loss even at perfect overlap) is kept behind ``literal_product=True``
for comparison runs.
"""

from __future__ import annotations

import numpy as np

from .tensor import ShapeError

BCE_EPS = 1e-7
DICE_SMOOTH = 1e-6


def _check_same_shape(y: np.ndarray, yhat: np.ndarray) -> None:
    if y.shape != yhat.shape:
        raise ShapeError(f"mask shape {y.shape} != prediction shape {yhat.shape}")


def bce_loss(y: np.ndarray, yhat: np.ndarray, eps: float = BCE_EPS):
    """Mean binary cross entropy over all pixels.

    Predictions are clamped to [eps, 1-eps] before the logs; the gradient is
    zero in the clamped region (the clamp is part of the function).
    """
    _check_same_shape(y, yhat)
    n = y.size
    yc = np.clip(yhat, eps, 1.0 - eps)
    loss = -(y * np.log(yc) + (1.0 - y) * np.log1p(-yc)).sum() / n
    inside = (yhat > eps) & (yhat < 1.0 - eps)
    grad = np.where(inside, -(y / yc - (1.0 - y) / (1.0 - yc)) / n, 0.0)
    return float(loss), grad.astype(yhat.dtype, copy=False)


def dice_loss(y: np.ndarray, yhat: np.ndarray, smooth: float = DICE_SMOOTH,
              literal_product: bool = False):
    """Soft Dice loss, 1 - (2*sum(y*yhat) + s) / (sum(y^2) + sum(yhat^2) + s).

    With ``literal_product`` the denominator becomes sum(y^2) * sum(yhat^2)
    + s, which on an all-ones pair of size N evaluates to 1 - 2/N instead
    of 0.
    """
    _check_same_shape(y, yhat)
    num = 2.0 * float((y * yhat).sum()) + smooth
    sy2 = float((y * y).sum())
    syh2 = float((yhat * yhat).sum())
    if literal_product:
        den = sy2 * syh2 + smooth
        dden = 2.0 * sy2 * yhat
    else:
        den = sy2 + syh2 + smooth
        dden = 2.0 * yhat
    loss = 1.0 - num / den
    grad = (num * dden - den * 2.0 * y) / (den * den)
    return float(loss), grad.astype(yhat.dtype, copy=False)


def total_loss(y: np.ndarray, yhat: np.ndarray, net=None, bce_weight: float = 1.0,
               dice_weight: float = 1.0, literal_product: bool = False):
    """Weighted BCE + Dice, plus the network's L2 penalty when given.

    The returned gradient covers only the prediction; the penalty gradient
    (2*lambda*w per regularized kernel) is applied to the weights by the
    training step.
    """
    lb, gb = bce_loss(y, yhat)
    ld, gd = dice_loss(y, yhat, literal_product=literal_product)
    loss = bce_weight * lb + dice_weight * ld
    grad = bce_weight * gb + dice_weight * gd
    if net is not None:
        loss += net.l2_penalty()
    return float(loss), grad
