import numpy as np

from .trees import sigmoid


def loss_and_grad(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2: float):
    """Mean logistic loss plus ``l2 / 2 * |w|^2`` and its gradient ``(dw, db)``.

    The intercept is not penalized.
    """
    z = X @ w + b
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * np.dot(w, w))
    r = sigmoid(z) - y
    return loss, X.T @ r / len(y) + l2 * w, float(r.mean())


def fit_logreg(X, y, *, learning_rate, iterations, l2):
    y = y.astype(float)
    w = np.zeros(X.shape[1])
    b = 0.0
    for _ in range(iterations):
        _, gw, gb = loss_and_grad(w, b, X, y, l2)
        w -= learning_rate * gw
        b -= learning_rate * gb
    return w, b
