"""Independent reference implementations used only by the tests.

Everything here is written as plain loops or textbook formulas and must not
call into the code paths it is used to check.
"""
import math

import numpy as np


def random_tree(rng, max_nodes=12, max_bottom=None):
    """Random strictly nested tree as a ``{node: parent}`` dict with level-major-friendly names."""
    while True:
        n = int(rng.integers(2, max_nodes + 1))
        parents = {"n0": None}
        for k in range(1, n):
            parents[f"n{k}"] = f"n{int(rng.integers(0, k))}"
        leaves = set(parents) - {p for p in parents.values() if p}
        if max_bottom is None or len(leaves) <= max_bottom:
            return parents


def summing_matrix_by_ancestors(parents, agg_order, bottom_order):
    """S[i, j] = 1 iff node i is bottom node j or one of its ancestors."""
    S = np.zeros((len(agg_order) + len(bottom_order), len(bottom_order)), dtype=int)
    rows = list(agg_order) + list(bottom_order)
    for j, b in enumerate(bottom_order):
        ancestors = {b}
        node = b
        while parents[node] is not None:
            node = parents[node]
            ancestors.add(node)
        for i, r in enumerate(rows):
            if r in ancestors:
                S[i, j] = 1
    return S


def naive_kron(A, B):
    A, B = np.asarray(A), np.asarray(B)
    p, q = A.shape
    r, s = B.shape
    out = np.zeros((p * r, q * s), dtype=np.result_type(A, B))
    for i in range(p):
        for j in range(q):
            for k in range(r):
                for l in range(s):
                    out[i * r + k, j * s + l] = A[i, j] * B[k, l]
    return out


def descendant_sums(parents, nodes, B):
    """Sum bottom series under each node with explicit loops. B is (T, n_b, m) in bottom order."""
    bottom = [x for x in nodes if x not in set(parents.values())]
    T, _, m = B.shape
    Y = np.zeros((T, len(nodes), m))
    for i, node in enumerate(nodes):
        for j, b in enumerate(bottom):
            x = b
            under = x == node
            while not under and parents[x] is not None:
                x = parents[x]
                under = x == node
            if under:
                Y[:, i, :] += B[:, j, :]
    return Y


def random_spd(rng, k, cond=None):
    A = rng.normal(size=(k, k))
    return A @ A.T + k * 0.1 * np.eye(k)


def kkt_reconcile(yhat_vec, W, C):
    """Minimise (y - yhat)' W^-1 (y - yhat) subject to C y = 0 via the full KKT system."""
    Winv = np.linalg.inv(W)
    k, q = W.shape[0], C.shape[0]
    K = np.zeros((k + q, k + q))
    K[:k, :k] = Winv
    K[:k, k:] = C.T
    K[k:, :k] = C
    rhs = np.concatenate([Winv @ yhat_vec, np.zeros(q)])
    return np.linalg.solve(K, rhs)[:k]


def shrinkage_loops(X):
    """Shrinkage intensity and covariance straight from the scalar formulas."""
    R, p = X.shape
    mean = [sum(X[t, i] for t in range(R)) / R for i in range(p)]
    Xc = [[X[t, i] - mean[i] for i in range(p)] for t in range(R)]
    S = [[sum(Xc[t][i] * Xc[t][j] for t in range(R)) / R for j in range(p)] for i in range(p)]
    sd = [math.sqrt(sum(Xc[t][i] ** 2 for t in range(R)) / (R - 1)) for i in range(p)]
    Z = [[Xc[t][i] / sd[i] for i in range(p)] for t in range(R)]
    num = den = 0.0
    var_r = [[0.0] * p for _ in range(p)]
    corr = [[0.0] * p for _ in range(p)]
    for i in range(p):
        for j in range(p):
            w = [Z[t][i] * Z[t][j] for t in range(R)]
            wbar = sum(w) / R
            var_r[i][j] = R / (R - 1) ** 3 * sum((wt - wbar) ** 2 for wt in w)
            corr[i][j] = S[i][j] / math.sqrt(S[i][i] * S[j][j])
            if i != j:
                num += var_r[i][j]
                den += corr[i][j] ** 2
    lam = min(max(num / den, 0.0), 1.0)
    W = [[S[i][j] if i == j else (1 - lam) * S[i][j] for j in range(p)] for i in range(p)]
    return lam, np.array(W), np.array(var_r), np.array(corr), np.array(S)


def rmse_loops(sq):
    """sq: (K, n, m, H) squared errors."""
    K, n, m, H = sq.shape
    out = np.zeros((n, m, H))
    for i in range(n):
        for j in range(m):
            for h in range(H):
                out[i, j, h] = math.sqrt(sum(sq[k, i, j, h] for k in range(K)) / K)
    return out


def rmsse_loops(err, train, p):
    """err: (H, n, m); train: (T, n, m)."""
    H, n, m = err.shape
    T = train.shape[0]
    per_h = []
    for h in range(H):
        acc = 0.0
        for i in range(n):
            for j in range(m):
                scale = sum((train[t, i, j] - train[t - p, i, j]) ** 2 for t in range(p, T)) / (T - p)
                acc += err[h, i, j] ** 2 / scale
        per_h.append(math.sqrt(acc / (m * n)))
    return np.array(per_h)


def random_case(rng, max_nodes=12, max_m=3, H=None):
    """(hierarchy, m, W, yhat) with a random tree, SPD W and Gaussian forecasts."""
    from mvrecon.hierarchy import NodeTree, build_hierarchy

    h = build_hierarchy(NodeTree.from_parents(random_tree(rng, max_nodes)))
    m = int(rng.integers(1, max_m + 1))
    H = H or int(rng.integers(1, 4))
    W = random_spd(rng, h.n * m)
    yhat = rng.normal(scale=5.0, size=(H, h.n, m))
    return h, m, W, yhat


def random_unbiased_G(rng, S):
    """Random G with G S = I: a particular solution plus a random null-space term."""
    k, q = S.shape
    pinv = np.linalg.inv(S.T @ S) @ S.T
    Gr = rng.normal(size=(q, k))
    return Gr + (np.eye(q) - Gr @ S) @ pinv
