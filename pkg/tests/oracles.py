"""Independent reference computations used only by the tests.

Nothing here calls into koopfam: matrix exponentials come from a Taylor
series with scaling and squaring written out by hand, trajectories from
SciPy's adaptive DOP853 integrator at tight tolerances, and closed forms are
typed in directly.
"""

import numpy as np
from scipy.integrate import solve_ivp


def taylor_expm(A, terms=30):
    real = np.isrealobj(A)
    A = np.asarray(A, dtype=complex)
    norm = np.linalg.norm(A, 1)
    j = max(0, int(np.ceil(np.log2(norm))) + 1) if norm > 0 else 0
    B = A / 2**j
    E = np.eye(A.shape[0], dtype=complex)
    term = np.eye(A.shape[0], dtype=complex)
    for k in range(1, terms):
        term = term @ B / k
        E = E + term
    for _ in range(j):
        E = E @ E
    return E.real if real else E


def ivp_trajectory(Afun, x0, times, breaks=(), piecewise=False):
    """Integrate x' = A(t) x on ``times``, restarting at each break.

    With ``piecewise=True`` the matrix is frozen at ``Afun(midpoint)`` on
    every interval between breaks.
    """
    times = np.asarray(times, dtype=float)
    x = np.asarray(x0, dtype=float)
    edges = [times[0]] + [b for b in breaks if times[0] < b < times[-1]] + [times[-1]]
    out = np.empty((x.size, times.size))
    for a, b in zip(edges[:-1], edges[1:]):
        sel = (times >= a) & (times <= b)
        if piecewise:
            A = Afun(0.5 * (a + b))
            rhs = lambda t, y, A=A: A @ y
        else:
            rhs = lambda t, y: Afun(t) @ y
        sol = solve_ivp(rhs, (a, b), x, method="DOP853", rtol=1e-13, atol=1e-14,
                        t_eval=times[sel], dense_output=True)
        out[:, sel] = sol.y
        x = sol.sol(b)
    return out


def rotation(beta, alpha=0.0):
    c, s = np.cos(beta), np.sin(beta)
    return np.exp(alpha) * np.array([[c, s], [-s, c]])


def harmonic_propagator(omega, tau):
    """exp([[0, 1], [-omega^2, 0]] tau) in closed form."""
    c, s = np.cos(omega * tau), np.sin(omega * tau)
    return np.array([[c, s / omega], [-omega * s, c]])


def damped_driven_alpha(t):
    """alpha(t, 0) for sigma = +1, -1, +1, ... on T_l = l(l+1)/4."""
    T = [0.0]
    while T[-1] < t:
        T.append(T[-1] + len(T) / 2)
    a = 0.0
    for l, (lo, hi) in enumerate(zip(T[:-1], T[1:])):
        a += (-1) ** l * (min(hi, t) - lo)
        if hi >= t:
            break
    return a
