"""Pure-Python/numpy implementations of the hot kernels.

These mirror ``_ckernels.pyx`` one-for-one and are used whenever the compiled
extension is missing or ``COKE_PURE_PYTHON=1`` is set.
"""
import numpy as np


def is_acyclic(adj):
    adj = np.asarray(adj, dtype=bool)
    d = adj.shape[0]
    indeg = adj.sum(axis=0).astype(np.int64)
    stack = [j for j in range(d) if indeg[j] == 0]
    seen = 0
    while stack:
        i = stack.pop()
        seen += 1
        for j in np.flatnonzero(adj[i]):
            indeg[j] -= 1
            if indeg[j] == 0:
                stack.append(int(j))
    return seen == d


def full_dag_from_perm(perm):
    perm = np.asarray(perm, dtype=np.int64)
    d = perm.shape[0]
    pos = np.empty(d, dtype=np.int64)
    pos[perm] = np.arange(d)
    return pos[:, None] < pos[None, :]


def rss_from_gram(cov, adj, ridge):
    """Per-variable ridge least-squares RSS from a centred cross-product matrix.

    Returns ``(rss, failed)`` where ``failed[j]`` marks targets whose ridged
    parent block was not positive definite; the caller recomputes those.
    """
    cov = np.asarray(cov, dtype=np.float64)
    adj = np.asarray(adj, dtype=bool)
    d = cov.shape[0]
    rss = np.empty(d)
    failed = np.zeros(d, dtype=bool)
    for j in range(d):
        parents = np.flatnonzero(adj[:, j])
        yy = cov[j, j]
        if parents.size == 0:
            rss[j] = max(yy, 0.0)
            continue
        a = cov[np.ix_(parents, parents)] + ridge * np.eye(parents.size)
        b = cov[parents, j]
        try:
            chol = np.linalg.cholesky(a)
        except np.linalg.LinAlgError:
            failed[j] = True
            rss[j] = 0.0
            continue
        w = np.linalg.solve(chol, b)
        beta = np.linalg.solve(chol.T, w)
        rss[j] = max(yy - w @ w - ridge * (beta @ beta), 0.0)
    return rss, failed
