"""Hot elementwise kernels: numba @njit with a pure-numpy fallback.

Matrix products always go through numpy's BLAS (fast on both paths); the
kernels below cover the per-element inner loops that dominate the rest of
the runtime: fused relu+inverted-dropout forward/backward, Adam parameter
updates, and Monte-Carlo prediction variance.

Set FEDUAF_NO_NUMBA=1 to force the numpy fallback. `BACKEND` reports which
path is live; `NUMPY_KERNELS` / `NUMBA_KERNELS` expose both sets for the
benchmark in benchmarks/bench_kernels.py.

All kernels take C-contiguous float64 arrays (masks are bool) and are
deterministic: per-element arithmetic is identical across backends, and the
few reductions (variance, bias gradients elsewhere) agree to float64
round-off.
"""

import os

import numpy as np

_FORCE_NUMPY = os.environ.get("FEDUAF_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")


# ---------------------------------------------------------------- numpy path

def _relu_dropout_forward_np(z, mask, keep):
    return np.where((z > 0.0) & mask, z / keep, 0.0)


def _relu_forward_np(z):
    return np.where(z > 0.0, z, 0.0)


def _relu_dropout_backward_np(grad_out, z, mask, keep):
    return np.where((z > 0.0) & mask, grad_out / keep, 0.0)


def _relu_backward_np(grad_out, z):
    return np.where(z > 0.0, grad_out, 0.0)


def _adam_update_np(param, grad, m, v, bc1, bc2, lr, beta1, beta2, eps):
    # in-place; bc1/bc2 are the precomputed bias corrections 1 - beta^t
    # (computed by the caller so both backends use identical values)
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / bc1
    v_hat = v / bc2
    param -= lr * m_hat / (np.sqrt(v_hat) + eps)


def _population_variance_np(preds):
    # preds: (T, B) -> per-column population variance (divide by T).
    # Values are shifted by the first row so constant columns give exactly 0.
    t = preds.shape[0]
    shifted = preds - preds[0]
    mean = np.sum(shifted, axis=0) / t
    centered = shifted - mean
    return np.sum(centered * centered, axis=0) / t


NUMPY_KERNELS = {
    "relu_dropout_forward": _relu_dropout_forward_np,
    "relu_forward": _relu_forward_np,
    "relu_dropout_backward": _relu_dropout_backward_np,
    "relu_backward": _relu_backward_np,
    "adam_update": _adam_update_np,
    "population_variance": _population_variance_np,
}


# ---------------------------------------------------------------- numba path

NUMBA_KERNELS = None

if not _FORCE_NUMPY:
    try:
        import numba

        _njit = numba.njit(cache=True)

        @_njit
        def _relu_dropout_forward_nb(z, mask, keep):
            out = np.empty_like(z)
            for i in range(z.shape[0]):
                for j in range(z.shape[1]):
                    val = z[i, j]
                    if val > 0.0 and mask[i, j]:
                        out[i, j] = val / keep
                    else:
                        out[i, j] = 0.0
            return out

        @_njit
        def _relu_forward_nb(z):
            out = np.empty_like(z)
            for i in range(z.shape[0]):
                for j in range(z.shape[1]):
                    val = z[i, j]
                    out[i, j] = val if val > 0.0 else 0.0
            return out

        @_njit
        def _relu_dropout_backward_nb(grad_out, z, mask, keep):
            out = np.empty_like(grad_out)
            for i in range(grad_out.shape[0]):
                for j in range(grad_out.shape[1]):
                    if z[i, j] > 0.0 and mask[i, j]:
                        out[i, j] = grad_out[i, j] / keep
                    else:
                        out[i, j] = 0.0
            return out

        @_njit
        def _relu_backward_nb(grad_out, z):
            out = np.empty_like(grad_out)
            for i in range(grad_out.shape[0]):
                for j in range(grad_out.shape[1]):
                    out[i, j] = grad_out[i, j] if z[i, j] > 0.0 else 0.0
            return out

        @_njit
        def _adam_update_nb(param, grad, m, v, bc1, bc2, lr, beta1, beta2, eps):
            for i in range(param.shape[0]):
                g = grad[i]
                m[i] = beta1 * m[i] + (1.0 - beta1) * g
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
                m_hat = m[i] / bc1
                v_hat = v[i] / bc2
                param[i] -= lr * m_hat / (np.sqrt(v_hat) + eps)

        @_njit
        def _population_variance_nb(preds):
            t, b = preds.shape
            out = np.empty(b)
            for j in range(b):
                ref = preds[0, j]
                s = 0.0
                for i in range(t):
                    s += preds[i, j] - ref
                mean = s / t
                acc = 0.0
                for i in range(t):
                    d = (preds[i, j] - ref) - mean
                    acc += d * d
                out[j] = acc / t
            return out

        NUMBA_KERNELS = {
            "relu_dropout_forward": _relu_dropout_forward_nb,
            "relu_forward": _relu_forward_nb,
            "relu_dropout_backward": _relu_dropout_backward_nb,
            "relu_backward": _relu_backward_nb,
            "adam_update": _adam_update_nb,
            "population_variance": _population_variance_nb,
        }
    except ImportError:
        NUMBA_KERNELS = None


if NUMBA_KERNELS is not None:
    BACKEND = "numba"
    _active = NUMBA_KERNELS
else:
    BACKEND = "numpy"
    _active = NUMPY_KERNELS

relu_dropout_forward = _active["relu_dropout_forward"]
relu_forward = _active["relu_forward"]
relu_dropout_backward = _active["relu_dropout_backward"]
relu_backward = _active["relu_backward"]
adam_update = _active["adam_update"]
population_variance = _active["population_variance"]


def warmup():
    """Trigger jit compilation once so timed code paths run hot."""
    z = np.ones((2, 2))
    mask = np.ones((2, 2), dtype=np.bool_)
    relu_dropout_forward(z, mask, 0.5)
    relu_forward(z)
    relu_dropout_backward(z, z, mask, 0.5)
    relu_backward(z, z)
    p = np.zeros(4)
    adam_update(p, np.ones(4), np.zeros(4), np.zeros(4), 0.1, 0.001, 1e-3, 0.9, 0.999, 1e-8)
    population_variance(np.ones((3, 2)))
