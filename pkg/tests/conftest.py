import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def central_diff(f, arrays, h=1e-5):
    """Central-difference gradient of scalar f() w.r.t. arrays, perturbed in place."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            old = a[idx]
            a[idx] = old + h
            fp = f()
            a[idx] = old - h
            fm = f()
            a[idx] = old
            g[idx] = (fp - fm) / (2 * h)
        grads.append(g)
    return grads


def normwise_err(a, b):
    a = np.concatenate([np.ravel(x) for x in a])
    b = np.concatenate([np.ravel(x) for x in b])
    scale = max(np.abs(a).max(), np.abs(b).max())
    return 0.0 if scale == 0 else float(np.abs(a - b).max() / scale)


def random_spd(rng, n, shift=1.0):
    A = rng.standard_normal((n, n))
    return A @ A.T + shift * np.eye(n)


def random_sym(rng, n):
    A = rng.standard_normal((n, n))
    return A + A.T


def power_singular_values(T, iters=20000):
    """Singular values of T by orthogonal (simultaneous) iteration on T'T. Test-only oracle."""
    G = T.T @ T
    n = G.shape[0]
    Q = np.linalg.qr(np.random.default_rng(0).standard_normal((n, n)))[0]
    for _ in range(iters):
        Q, _ = np.linalg.qr(G @ Q)
    lam = np.diag(Q.T @ G @ Q)
    return np.sqrt(np.clip(np.sort(lam)[::-1], 0, None))


# one line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
