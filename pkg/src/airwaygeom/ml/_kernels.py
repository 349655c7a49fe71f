"""Compiled inner loops: scaling, PCA, the two SVM dual solvers, and
leave-one-out evaluation over every principal-component count at once."""
import math

import numpy as np
from numba import njit, prange

TAU = 1e-12


@njit(cache=True)
def scaler_stats(X):
    n, m = X.shape
    mean = np.empty(m)
    std = np.empty(m)
    for j in range(m):
        mu = 0.0
        for i in range(n):
            mu += X[i, j]
        mu /= n
        var = 0.0
        for i in range(n):
            d = X[i, j] - mu
            var += d * d
        mean[j] = mu
        std[j] = math.sqrt(var / n)
    return mean, std


@njit(cache=True)
def pca_components(Z):
    """All principal directions of centred data, rows sign-fixed so that each
    row's largest-magnitude entry is positive."""
    n, m = Z.shape
    if n >= m:
        _, s, vt = np.linalg.svd(Z, full_matrices=False)
    else:
        # directions past the rank are arbitrary but orthonormal; the data
        # has no extent along them
        _, s0, vt = np.linalg.svd(Z, full_matrices=True)
        s = np.zeros(m)
        s[: s0.size] = s0
    comps = vt.copy()
    for r in range(m):
        best = 0
        for c in range(1, m):
            if abs(comps[r, c]) > abs(comps[r, best]):
                best = c
        if comps[r, best] < 0:
            for c in range(m):
                comps[r, c] = -comps[r, c]
    return comps, s


@njit(cache=True)
def _gap_bias(K, y, alpha, G, b, C):
    # G = Q alpha - 1, so sum_j alpha_j y_j K_ij = y_i (G_i + 1)
    n = y.size
    quad = 0.0
    asum = 0.0
    hinge = 0.0
    for i in range(n):
        quad += alpha[i] * (G[i] + 1.0)
        asum += alpha[i]
        h = -G[i] - y[i] * b
        if h > 0:
            hinge += h
    primal = 0.5 * quad + C * hinge
    dual = asum - 0.5 * quad
    return primal - dual


@njit(cache=True)
def _hinge_at(y, f, b):
    total = 0.0
    for i in range(y.size):
        h = 1.0 - y[i] * (f[i] + b)
        if h > 0:
            total += h
    return total


@njit(cache=True)
def _mid_optimal_bias(y, G):
    """Midpoint of the interval of optimal intercepts for the current w.

    The hinge sum is piecewise linear in b with integer slopes, so its
    minimum is either a single breakpoint or an exactly flat stretch between
    two.  Taking the midpoint makes b independent of the solver's path,
    which averaging over free support vectors does not when the stretch is
    flat.
    """
    n = y.size
    f = np.empty(n)
    for i in range(n):
        f[i] = y[i] * (G[i] + 1.0)
    best = np.inf
    for i in range(n):
        v = _hinge_at(y, f, y[i] - f[i])
        if v < best:
            best = v
    tol = 1e-9 * (1.0 + best)
    lo = np.inf
    hi = -np.inf
    for i in range(n):
        b = y[i] - f[i]
        if _hinge_at(y, f, b) <= best + tol:
            lo = min(lo, b)
            hi = max(hi, b)
    return 0.5 * (lo + hi)


@njit(cache=True)
def smo(K, y, C, gap_tol, max_iter):
    """Soft-margin dual with bias: SMO with second-order working-set
    selection.  The stopping tolerance tightens until the duality gap is
    below ``gap_tol``.  Returns ``(alpha, b, gap, iterations)``."""
    n = y.size
    alpha = np.zeros(n)
    G = -np.ones(n)
    eps = 1e-3
    it = 0
    gap = np.inf
    b = 0.0
    while True:
        while it < max_iter:
            gmax = -np.inf
            i = -1
            for t in range(n):
                if y[t] > 0:
                    if alpha[t] < C and -G[t] >= gmax:
                        gmax = -G[t]
                        i = t
                else:
                    if alpha[t] > 0 and G[t] >= gmax:
                        gmax = G[t]
                        i = t
            if i < 0:
                break
            gmax2 = -np.inf
            j = -1
            best = np.inf
            for t in range(n):
                if y[t] > 0:
                    if alpha[t] > 0:
                        diff = gmax + G[t]
                        if G[t] >= gmax2:
                            gmax2 = G[t]
                    else:
                        continue
                else:
                    if alpha[t] < C:
                        diff = gmax - G[t]
                        if -G[t] >= gmax2:
                            gmax2 = -G[t]
                    else:
                        continue
                if diff > 0:
                    quad = K[i, i] + K[t, t] - 2.0 * K[i, t]
                    if quad <= 0:
                        quad = TAU
                    obj = -(diff * diff) / quad
                    if obj <= best:
                        best = obj
                        j = t
            if gmax + gmax2 < eps or j < 0:
                break
            it += 1
            ai = alpha[i]
            aj = alpha[j]
            quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
            if quad <= 0:
                quad = TAU
            if y[i] != y[j]:
                delta = (-G[i] - G[j]) / quad
                diff = ai - aj
                ai += delta
                aj += delta
                if diff > 0:
                    if aj < 0:
                        aj = 0.0
                        ai = diff
                else:
                    if ai < 0:
                        ai = 0.0
                        aj = -diff
                if diff > 0:
                    if ai > C:
                        ai = C
                        aj = C - diff
                else:
                    if aj > C:
                        aj = C
                        ai = C + diff
            else:
                delta = (G[i] - G[j]) / quad
                total = ai + aj
                ai -= delta
                aj += delta
                if total > C:
                    if ai > C:
                        ai = C
                        aj = total - C
                else:
                    if aj < 0:
                        aj = 0.0
                        ai = total
                if total > C:
                    if aj > C:
                        aj = C
                        ai = total - C
                else:
                    if ai < 0:
                        ai = 0.0
                        aj = total
            dai = ai - alpha[i]
            daj = aj - alpha[j]
            alpha[i] = ai
            alpha[j] = aj
            for t in range(n):
                G[t] += y[t] * (y[i] * K[i, t] * dai + y[j] * K[j, t] * daj)
        b = _mid_optimal_bias(y, G)
        gap = _gap_bias(K, y, alpha, G, b, C)
        if gap <= gap_tol or eps < 1e-15 or it >= max_iter:
            break
        eps *= 0.1
    return alpha, b, gap, it


@njit(cache=True)
def dcd(K, y, C, gap_tol, max_epochs):
    """Soft-margin dual without bias: cyclic dual coordinate descent.
    Returns ``(alpha, 0.0, gap, epochs)``."""
    n = y.size
    alpha = np.zeros(n)
    F = np.zeros(n)
    eps = 1e-3
    epochs = 0
    gap = np.inf
    while epochs < max_epochs:
        epochs += 1
        maxpg = 0.0
        for i in range(n):
            if K[i, i] <= 0:
                continue
            g = y[i] * F[i] - 1.0
            pg = g
            if alpha[i] <= 0:
                pg = min(g, 0.0)
            elif alpha[i] >= C:
                pg = max(g, 0.0)
            if abs(pg) > maxpg:
                maxpg = abs(pg)
            if pg != 0.0:
                new = min(max(alpha[i] - g / K[i, i], 0.0), C)
                d = (new - alpha[i]) * y[i]
                alpha[i] = new
                if d != 0.0:
                    for t in range(n):
                        F[t] += d * K[t, i]
        if maxpg < eps:
            quad = 0.0
            asum = 0.0
            hinge = 0.0
            for i in range(n):
                quad += alpha[i] * y[i] * F[i]
                asum += alpha[i]
                h = 1.0 - y[i] * F[i]
                if h > 0:
                    hinge += h
            gap = 0.5 * quad + C * hinge - (asum - 0.5 * quad)
            if gap <= gap_tol or eps < 1e-15:
                break
            eps *= 0.1
    return alpha, 0.0, gap, epochs


@njit(cache=True)
def train_dual(K, y, C, fit_bias, gap_tol):
    if fit_bias:
        return smo(K, y, C, gap_tol, 10_000_000)
    return dcd(K, y, C, gap_tol, 1_000_000)


@njit(cache=True)
def loocv_predictions(X, y01, kmax, C, fit_bias, global_scope, gap_tol):
    """Held-out predictions for every fold and every k in 1..kmax.

    Returns ``(preds[kmax, n], single_class[n])``; labels are 0/1.
    """
    n, m = X.shape
    preds = np.zeros((kmax, n), dtype=np.int8)
    single = np.zeros(n, dtype=np.bool_)
    ypm = np.where(y01 == 1, 1.0, -1.0)
    Pall = np.empty((n, m))
    if global_scope:
        mean, std = scaler_stats(X)
        for j in range(m):
            if std[j] == 0.0:
                raise ValueError("constant feature column")
        Z = (X - mean) / std
        comps, _ = pca_components(Z)
        Pall = Z @ comps.T
    ntr = n - 1
    Ptr = np.empty((ntr, m))
    ptest = np.empty(m)
    ytr = np.empty(ntr)
    for f in range(n):
        r = 0
        npos = 0
        for i in range(n):
            if i != f:
                ytr[r] = ypm[i]
                if ypm[i] > 0:
                    npos += 1
                r += 1
        if npos == 0 or npos == ntr:
            single[f] = True
            lab = 1 if npos == ntr else 0
            for k in range(kmax):
                preds[k, f] = lab
            continue
        if global_scope:
            r = 0
            for i in range(n):
                if i != f:
                    Ptr[r] = Pall[i]
                    r += 1
            ptest[:] = Pall[f]
        else:
            Xtr = np.empty((ntr, m))
            r = 0
            for i in range(n):
                if i != f:
                    Xtr[r] = X[i]
                    r += 1
            mean, std = scaler_stats(Xtr)
            for j in range(m):
                if std[j] == 0.0:
                    raise ValueError("constant feature column in a training fold")
            Ztr = (Xtr - mean) / std
            comps, _ = pca_components(Ztr)
            Ptr[:, :] = Ztr @ comps.T
            ptest[:] = comps @ ((X[f] - mean) / std)
        K = np.zeros((ntr, ntr))
        for k in range(kmax):
            col = Ptr[:, k]
            for a in range(ntr):
                for c in range(ntr):
                    K[a, c] += col[a] * col[c]
            alpha, b, _, _ = train_dual(K, ytr, C, fit_bias, gap_tol)
            score = b
            for d in range(k + 1):
                wd = 0.0
                for a in range(ntr):
                    wd += alpha[a] * ytr[a] * Ptr[a, d]
                score += wd * ptest[d]
            preds[k, f] = 1 if score > 0.0 else 0
    return preds, single


@njit(cache=True)
def confusion(preds, y01):
    tp = 0
    tn = 0
    fp = 0
    fn = 0
    for i in range(y01.size):
        if y01[i] == 1:
            if preds[i] == 1:
                tp += 1
            else:
                fn += 1
        else:
            if preds[i] == 1:
                fp += 1
            else:
                tn += 1
    return tp, tn, fp, fn


@njit(cache=True)
def best_k_counts(preds, y01):
    """Best k by (accuracy, specificity, smaller k) -> (k, tp, tn, fp, fn)."""
    best = np.zeros(5, dtype=np.int64)
    best_correct = -1
    best_tn = -1
    for k in range(preds.shape[0]):
        tp, tn, fp, fn = confusion(preds[k], y01)
        correct = tp + tn
        if correct > best_correct or (correct == best_correct and tn > best_tn):
            best_correct = correct
            best_tn = tn
            best[0] = k + 1
            best[1] = tp
            best[2] = tn
            best[3] = fp
            best[4] = fn
    return best


@njit(cache=True, parallel=True)
def evaluate_subsets(X, y01, combos, C, fit_bias, global_scope, gap_tol):
    """Per subset: best k and its confusion counts, rows indexed like ``combos``."""
    nsub, s = combos.shape
    out = np.zeros((nsub, 5), dtype=np.int64)
    for c in prange(nsub):
        Xs = np.empty((X.shape[0], s))
        for j in range(s):
            Xs[:, j] = X[:, combos[c, j]]
        preds, _ = loocv_predictions(Xs, y01, s, C, fit_bias, global_scope, gap_tol)
        out[c] = best_k_counts(preds, y01)
    return out
