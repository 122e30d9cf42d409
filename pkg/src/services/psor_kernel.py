"""
Проекционный метод Гаусса–Зейделя с верхней релаксацией (PSOR)
для связанной по режимам линейной задачи с препятствием.

Уравнение в узле n режима i:

    diag[n,i]·v[n,i] = rhs[n,i] + up[n,i]·v[n+1,i] + down[n,i]·v[n−1,i]
                       + Σ_{j≠i} coupling[i,j]·v[n,j]

Узел 0 задаётся режимом left_mode[i]:

    LEFT_DEGENERATE  соотношение без производных, обычное обновление;
    LEFT_ONE_SIDED   односторонние разности:
                     diag[0,i]·v0 = rhs[0,i] + left[i,0]·v1 + left[i,1]·v2 + связь.
                     diag[0,i] < 0, поэтому v0 исключается из строки узла 1,
                     и узлы 0 и 1 обновляются вместе;
    LEFT_PINNED      v0 = g0 (сетка из двух узлов).

Последний узел - условие Дирихле v = g, он не обновляется.
"""
from numba import njit

LEFT_DEGENERATE = 0
LEFT_ONE_SIDED = 1
LEFT_PINNED = 2


@njit(nogil=True, cache=True)
def _cross(v, coupling, n, i):
    acc = 0.0
    for j in range(v.shape[1]):
        if j != i:
            acc += coupling[i, j] * v[n, j]
    return acc


@njit(nogil=True, cache=True)
def projected_sor(v, g, diag, up, down, rhs, coupling, left, left_mode,
                  omega, tol, max_sweeps):
    """
    Выполнять проходы PSOR, пока max |Δv|·|diag|/ω > tol.

    Returns:
        (число проходов, последняя невязка, признак сходимости)
    """
    n_nodes = v.shape[0]
    m = v.shape[1]
    last = n_nodes - 1
    change = 0.0

    for sweep in range(1, max_sweeps + 1):
        change = 0.0
        for n in range(last):
            for i in range(m):
                mode = left_mode[i]
                if n == 0 and mode != LEFT_DEGENERATE:
                    continue

                acc = rhs[n, i] + _cross(v, coupling, n, i)
                if n == 1 and mode == LEFT_ONE_SIDED:
                    # v0 = (acc0 + left0·v1)/diag0 подставлено в строку узла 1
                    acc += up[1, i] * v[2, i]
                    acc0 = rhs[0, i] + _cross(v, coupling, 0, i) + left[i, 1] * v[2, i]
                    reduced = diag[1, i] - down[1, i] * left[i, 0] / diag[0, i]
                    target = (acc + down[1, i] * acc0 / diag[0, i]) / reduced

                    old1 = v[1, i]
                    new1 = old1 + omega * (target - old1)
                    if new1 <= g[1, i]:
                        new1 = g[1, i]
                        new0 = g[0, i]
                    else:
                        new0 = (acc0 + left[i, 0] * new1) / diag[0, i]
                        if new0 < g[0, i]:
                            # Узел 0 на препятствии: узел 1 по своей строке
                            new0 = g[0, i]
                            new1 = (acc + down[1, i] * new0) / diag[1, i]
                            if new1 < g[1, i]:
                                new1 = g[1, i]
                    v[0, i] = new0
                    v[1, i] = new1

                    delta = abs(new1 - old1) * abs(reduced) / omega
                    if delta > change:
                        change = delta
                    continue

                if n > 0:
                    acc += up[n, i] * v[n + 1, i] + down[n, i] * v[n - 1, i]

                old = v[n, i]
                new = old + omega * (acc / diag[n, i] - old)
                if new < g[n, i]:
                    new = g[n, i]
                v[n, i] = new

                delta = abs(new - old) * diag[n, i] / omega
                if delta > change:
                    change = delta
        if change <= tol:
            return sweep, change, True

    return max_sweeps, change, False
