"""Numerical oracles: RK4 integration, flow commutators, flow-box integrals."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .geometry import ControlAffineSystem, VectorField
from .symbolic import Expr, as_expr, differentiate, lambdify

DEFAULT_DT = 1e-3


class NumericError(Exception):
    pass


class FlowEscapeError(NumericError):
    pass


@dataclass
class Trajectory:
    t0: float
    dt: float
    states: np.ndarray       # (N, n)
    inputs: np.ndarray       # (N, m)

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if len(self.states) != len(self.inputs):
            raise ValueError("state and input sample counts differ")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.states))

    def __len__(self):
        return len(self.states)


def field_function(v: VectorField, params: Mapping[str, float] | None = None) -> Callable:
    """Float callable x -> v(x) with non-frame symbols bound from ``params``."""
    params = dict(params or {})
    extra = sorted(v.free_symbols - set(v.frame))
    missing = [s for s in extra if s not in params]
    if missing:
        raise NumericError(f"unbound parameters {missing}")
    fn = lambdify(list(v.components), list(v.frame) + extra)
    pvals = [float(params[s]) for s in extra]

    def f(x):
        return np.array(fn(*x, *pvals), dtype=float)

    return f


def rk4_step(rhs: Callable, t: float, x: np.ndarray, h: float) -> np.ndarray:
    k1 = rhs(t, x)
    k2 = rhs(t + h / 2, x + h / 2 * k1)
    k3 = rhs(t + h / 2, x + h / 2 * k2)
    k4 = rhs(t + h, x + h * k3)
    return x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def rk4(rhs: Callable, x0, t0: float, t1: float, dt: float = DEFAULT_DT) -> np.ndarray:
    """Fixed-step RK4 from t0 to t1; returns the sample array (N, n)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    steps = int(round((t1 - t0) / dt))
    if steps < 0 or abs(t0 + steps * dt - t1) > 1e-9 * max(1.0, abs(t1)):
        raise ValueError("time span is not a whole number of steps")
    x = np.array(x0, dtype=float)
    out = np.empty((steps + 1, len(x)))
    out[0] = x
    for i in range(steps):
        x = rk4_step(rhs, t0 + i * dt, x, dt)
        if not np.all(np.isfinite(x)):
            raise NumericError(f"non-finite state at t={t0 + (i + 1) * dt}")
        out[i + 1] = x
    return out


def system_rhs(sys: ControlAffineSystem, u_signal: Callable) -> Callable:
    f0 = field_function(sys.drift)
    fs = [field_function(f) for f in sys.controls]

    def rhs(t, x):
        u = u_signal(t)
        out = f0(x)
        for ui, fi in zip(u, fs):
            out = out + ui * fi(x)
        return out

    return rhs


def integrate(sys: ControlAffineSystem, x0, u_signal: Callable, t_span, dt: float = DEFAULT_DT) -> Trajectory:
    t0, t1 = t_span
    states = rk4(system_rhs(sys, u_signal), x0, t0, t1, dt)
    inputs = np.array([np.asarray(u_signal(t0 + i * dt), dtype=float).reshape(sys.m)
                       for i in range(len(states))])
    return Trajectory(t0, dt, states, inputs)


class SampledSignal:
    """Piecewise-linear interpolation of samples on a uniform grid.

    Exact at grid nodes, so RK4 driven at half the sampling step reads only
    recovered values.
    """

    def __init__(self, t0: float, dt: float, values):
        self.t0, self.dt = t0, dt
        self.values = np.asarray(values, dtype=float)

    def __call__(self, t):
        s = (t - self.t0) / self.dt
        i = int(round(s))
        if abs(s - i) < 1e-7 and 0 <= i < len(self.values):
            return self.values[i]
        i = min(max(int(np.floor(s)), 0), len(self.values) - 2)
        w = s - i
        return (1 - w) * self.values[i] + w * self.values[i + 1]


# --------------------------------------------------------------------------
# flows and brackets


def flow(f: Callable, x, t: float, substeps: int = 4) -> np.ndarray:
    """Approximate time-t flow of an autonomous field ``f`` (RK4)."""
    x = np.array(x, dtype=float)
    h = t / substeps
    rhs = lambda _t, y: f(y)
    for _ in range(substeps):
        x = rk4_step(rhs, 0.0, x, h)
    if not np.all(np.isfinite(x)):
        raise FlowEscapeError("flow left the evaluation domain")
    return x


def bracket_fd_oracle(a: VectorField, b: VectorField, point, h: float = 1e-3,
                      params: Mapping[str, float] | None = None, *,
                      richardson: bool = True) -> np.ndarray:
    """Flow-commutator estimate of [a, b] at ``point``.

    The commutator of the flows at +h and at -h is averaged, which cancels
    the odd powers of h.  With ``richardson`` the estimates at h and h/2 are
    combined to remove the h^2 term as well.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    if a.frame != b.frame:
        raise ValueError("fields over different frames")
    fa, fb = field_function(a, params), field_function(b, params)
    p = _as_vector(point, a.frame)

    def comm(s):
        y = flow(fa, p, s)
        y = flow(fb, y, s)
        y = flow(fa, y, -s)
        y = flow(fb, y, -s)
        return (y - p) / (s * s)

    def sym(s):
        return 0.5 * (comm(s) + comm(-s))

    try:
        if not richardson:
            return sym(h)
        return (4.0 * sym(h / 2) - sym(h)) / 3.0
    except (ValueError, ZeroDivisionError, OverflowError) as exc:
        raise FlowEscapeError(str(exc)) from exc


def _as_vector(point, frame) -> np.ndarray:
    if isinstance(point, Mapping):
        return np.array([float(point[x]) for x in frame])
    return np.array(point, dtype=float)


class FlowBoxIntegrals:
    """Numeric first integrals of a field from a transversal hyperplane.

    ``h(x)`` follows the flow through x until it meets the hyperplane
    through the base point, then returns the coordinates of the hit point
    along the transversal directions.
    """

    def __init__(self, f: VectorField, point, transversal_dirs=None, *,
                 params=None, step: float = 1e-2, t_max: float = 20.0):
        self.frame = f.frame
        self.f = field_function(f, params)
        self.base = _as_vector(point, f.frame)
        v = self.f(self.base)
        if np.linalg.norm(v) == 0:
            raise NumericError("field vanishes at the base point")
        n = len(self.frame)
        if transversal_dirs is None:
            normal = v / np.linalg.norm(v)
            # orthonormal complement of the normal
            q, _ = np.linalg.qr(np.column_stack([normal, np.eye(n)]))
            dirs = q[:, 1:n]
        else:
            dirs = np.array(transversal_dirs, dtype=float).T
            if dirs.shape != (n, n - 1):
                raise ValueError("need n-1 transversal directions")
            full = np.column_stack([dirs, v])
            if np.linalg.matrix_rank(full) < n:
                raise NumericError("transversal directions do not complement the field")
            normal = np.linalg.svd(dirs.T)[2][-1]
        self.normal = normal
        self.dirs = dirs
        self._pinv = np.linalg.pinv(dirs)
        self.step, self.t_max = step, t_max

    def _side(self, y):
        return float(self.normal @ (y - self.base))

    def hit(self, x) -> np.ndarray:
        y = np.array(x, dtype=float)
        s0 = self._side(y)
        if s0 == 0.0:
            return y
        rate = float(self.normal @ self.f(y))
        h = self.step if s0 * rate < 0 else -self.step
        rhs = lambda _t, z: self.f(z)
        t = 0.0
        while abs(t) < self.t_max:
            y_next = rk4_step(rhs, 0.0, y, h)
            if not np.all(np.isfinite(y_next)):
                raise FlowEscapeError("flow left the evaluation domain")
            s1 = self._side(y_next)
            if s1 == 0.0:
                return y_next
            if (s1 > 0) != (s0 > 0):
                return self._bisect(y, h, s0)
            y, s0, t = y_next, s1, t + h
        raise FlowEscapeError("flow did not reach the transversal within the time budget")

    def _bisect(self, y, h, s0) -> np.ndarray:
        rhs = lambda _t, z: self.f(z)
        lo, hi = 0.0, h
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            s = self._side(rk4_step(rhs, 0.0, y, mid))
            if s == 0.0:
                lo = hi = mid
                break
            if (s > 0) == (s0 > 0):
                lo = mid
            else:
                hi = mid
            if abs(hi - lo) < 1e-15:
                break
        return rk4_step(rhs, 0.0, y, 0.5 * (lo + hi))

    def __call__(self, x) -> np.ndarray:
        y = self.hit(_as_vector(x, self.frame))
        return self._pinv @ (y - self.base)


def flow_box_integrals(f_k: VectorField, point, transversal_dirs=None, **kw) -> FlowBoxIntegrals:
    return FlowBoxIntegrals(f_k, point, transversal_dirs, **kw)


def directional_derivative(fn: Callable, x, v, eps: float = 1e-4) -> np.ndarray:
    x, v = np.asarray(x, float), np.asarray(v, float)
    return (np.asarray(fn(x + eps * v)) - np.asarray(fn(x - eps * v))) / (2 * eps)


# --------------------------------------------------------------------------
# derivatives of signals


def fornberg_weights(offsets: Sequence[float], order: int) -> np.ndarray:
    """Finite-difference weights at 0 for the given stencil offsets."""
    z = np.asarray(offsets, dtype=float)
    n = len(z)
    c = np.zeros((n, order + 1))
    c1, c4 = 1.0, z[0]
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, order)
        c2, c5, c4 = 1.0, c4, z[i]
        for j in range(i):
            c3 = z[i] - z[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order]


def fd_derivative(samples, dt: float, order: int) -> np.ndarray:
    """Order-``order`` derivative of uniformly sampled data, 4th-order accurate.

    Interior points use the 5-point central stencil; near the ends a
    one-sided stencil of order+4 points is used.
    """
    y = np.asarray(samples, dtype=float)
    npts = len(y)
    width = order + 4 if order % 2 else order + 3
    width = max(width, 5)
    side = order + 4
    if npts < side:
        raise NumericError(f"need at least {side} samples for derivative order {order}")
    out = np.empty_like(y)
    cache: dict = {}
    for i in range(npts):
        lo = i - width // 2
        if lo >= 0 and lo + width <= npts:
            idx = range(lo, lo + width)
        else:
            lo = min(max(i - side // 2, 0), npts - side)
            idx = range(lo, lo + side)
        key = tuple(j - i for j in idx)
        if key not in cache:
            cache[key] = fornberg_weights(key, order) / dt ** order
        out[i] = np.tensordot(cache[key], y[list(idx)], axes=(0, 0))
    return out


def signal_jets(signal, times: np.ndarray, order: int, var: str = "t") -> list[np.ndarray]:
    """Values and derivatives 0..order of a signal on ``times``.

    ``signal`` is a list of Exprs in ``var`` (differentiated exactly), a
    callable t -> vector (sampled, then finite differences) or an array of
    samples on ``times``.
    """
    times = np.asarray(times, dtype=float)
    if isinstance(signal, (list, tuple)) and signal and isinstance(signal[0], (Expr, str)):
        exprs = [as_expr(s) for s in signal]
        out = []
        for d in range(order + 1):
            fns = [lambdify(e, [var]) for e in exprs]
            out.append(np.array([[fn(t) for fn in fns] for t in times]))
            exprs = [differentiate(e, var) for e in exprs]
        return out
    if callable(signal):
        samples = np.array([np.asarray(signal(t), dtype=float) for t in times])
    else:
        samples = np.asarray(signal, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    dt = times[1] - times[0]
    return [samples] + [fd_derivative(samples, dt, d) for d in range(1, order + 1)]


def newton(fun: Callable, jac: Callable, x0, *, tol: float = 1e-10, max_iter: int = 50,
           max_halvings: int = 8) -> tuple[np.ndarray, float]:
    """Damped Newton on a square system; returns (solution, residual inf-norm)."""
    x = np.array(x0, dtype=float)
    r = np.asarray(fun(x), dtype=float)
    res = np.max(np.abs(r)) if r.size else 0.0
    for _ in range(max_iter):
        if res < tol:
            return x, res
        J = np.asarray(jac(x), dtype=float)
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError as exc:
            raise NumericError("singular Jacobian (chart boundary?)") from exc
        lam = 1.0
        for _ in range(max_halvings + 1):
            xn = x + lam * step
            rn = np.asarray(fun(xn), dtype=float)
            resn = np.max(np.abs(rn))
            if np.isfinite(resn) and resn < res:
                break
            lam /= 2
        else:
            raise NumericError(f"Newton stalled at residual {res:.3e}")
        x, r, res = xn, rn, resn
    if res < tol:
        return x, res
    raise NumericError(f"Newton did not converge (residual {res:.3e})")
