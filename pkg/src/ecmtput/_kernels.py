"""Hot loops behind the predictors and the trace integrator.

Each kernel exists twice: a scalar loop (compiled by numba when available)
and a vectorized numpy formulation.  The public dispatchers at the bottom
pick one according to :func:`ecmtput._accel.use_numba`.  Both paths must
agree to floating-point rounding; ``tests/test_kernels.py`` checks this.
"""
import numpy as np

from ._accel import njit, use_numba

# relative slack when comparing accumulated tail mass with alpha/2
TRIM_RTOL = 1e-12
# absolute slack (seconds) for a transfer that finishes right at end_time
END_TOL = 1e-9


# ---------------------------------------------------------------------------
# binning


def _bin_indices_numpy(edges, values):
    k = np.searchsorted(edges, values, side="left") - 1
    return np.clip(k, 0, edges.shape[0] - 2)


@njit
def _bin_indices_loop(edges, values):
    out = np.empty(values.shape[0], dtype=np.int64)
    kmax = edges.shape[0] - 2
    for i in range(values.shape[0]):
        k = np.searchsorted(edges, values[i]) - 1
        if k < 0:
            k = 0
        elif k > kmax:
            k = kmax
        out[i] = k
    return out


# ---------------------------------------------------------------------------
# ECM walk-forward: predict, then observe, for every value in turn


@njit
def _ecm_walk_loop(values, edges, reps, counts, ev_from, ev_to, head, tail,
                   cap, last_bin, last_obs, fallback, learn, out):
    K = reps.shape[0]
    kmax = K - 1
    for i in range(values.shape[0]):
        x = values[i]
        if last_bin >= 0:
            s = 0
            for j in range(K):
                s += counts[last_bin, j]
            if s > 0:
                acc = 0.0
                for j in range(K):
                    acc += (counts[last_bin, j] / s) * reps[j]
                out[i] = acc
            else:
                out[i] = last_obs
        else:
            out[i] = fallback
        b = np.searchsorted(edges, x) - 1
        if b < 0:
            b = 0
        elif b > kmax:
            b = kmax
        if learn and last_bin >= 0:
            ev_from[tail] = last_bin
            ev_to[tail] = b
            tail += 1
            counts[last_bin, b] += 1
            if cap >= 0 and tail - head > cap:
                counts[ev_from[head], ev_to[head]] -= 1
                head += 1
        last_bin = b
        last_obs = x
    return head, tail


def _ecm_walk_numpy(values, edges, reps, counts, ev_from, ev_to, head, tail,
                    cap, last_bin, last_obs, fallback, learn, out):
    n = values.shape[0]
    if n == 0:
        return head, tail
    K = reps.shape[0]
    bins = _bin_indices_numpy(edges, values)
    prev_bin = np.concatenate(([last_bin], bins[:-1]))
    prev_obs = np.concatenate(([last_obs], values[:-1]))
    cold = prev_bin < 0
    rows = np.where(cold, 0, prev_bin)

    if not learn:
        den = counts.sum(axis=1)[rows]
        num = (counts @ reps)[rows]
    else:
        has_prev = ~cold
        new_from = prev_bin[has_prev]
        new_to = bins[has_prev]
        n_old = tail - head
        all_from = np.concatenate((ev_from[head:tail], new_from))
        all_to = np.concatenate((ev_to[head:tail], new_to))
        n_all = all_from.shape[0]
        # per-row prefix sums over the event log: count and Σ representative
        onehot = np.zeros((n_all + 1, K))
        onehot[np.arange(1, n_all + 1), all_from] = 1.0
        cum_cnt = np.cumsum(onehot, axis=0)
        onehot[np.arange(1, n_all + 1), all_from] = reps[all_to]
        cum_val = np.cumsum(onehot, axis=0)
        # events committed before step i's prediction
        committed = n_old + np.concatenate(([0], np.cumsum(has_prev)[:-1]))
        lo = np.zeros(n, dtype=np.int64) if cap < 0 else np.maximum(committed - cap, 0)
        den = np.rint(cum_cnt[committed, rows] - cum_cnt[lo, rows])
        num = cum_val[committed, rows] - cum_val[lo, rows]

        end = n_all
        start = 0 if cap < 0 else max(end - cap, 0)
        keep_from = all_from[start:end]
        keep_to = all_to[start:end]
        flat = np.bincount(keep_from * K + keep_to, minlength=K * K)
        counts[:, :] = flat.reshape(K, K)
        ev_from[head:head + n_all] = all_from
        ev_to[head:head + n_all] = all_to
        head, tail = head + start, head + end

    with np.errstate(invalid="ignore", divide="ignore"):
        est = np.where(den > 0, num / np.where(den > 0, den, 1.0), prev_obs)
    out[:] = np.where(cold, fallback, est)
    return head, tail


# ---------------------------------------------------------------------------
# AM walk-forward


@njit
def _am_walk_loop(values, window, n_window, window_size, fallback, out):
    # window is a ring buffer; oldest element at index ``start``
    start = 0
    count = n_window
    for i in range(values.shape[0]):
        if count == 0:
            out[i] = fallback
        else:
            ref = window[start]
            acc = 0.0
            for j in range(count):
                acc += window[(start + j) % window_size] - ref
            out[i] = ref + acc / count
        if count < window_size:
            window[(start + count) % window_size] = values[i]
            count += 1
        else:
            window[start] = values[i]
            start = (start + 1) % window_size
    # rotate so the caller gets oldest-first order
    tmp = window.copy()
    for j in range(count):
        window[j] = tmp[(start + j) % window_size]
    return count


def _am_walk_numpy(values, window, n_window, window_size, fallback, out):
    n = values.shape[0]
    history = np.concatenate((np.full(window_size, np.nan), window[:n_window], values))
    offset = window_size + n_window
    # view i covers the window_size values preceding values[i]
    views = np.lib.stride_tricks.sliding_window_view(history, window_size)[
        offset - window_size:offset - window_size + n]
    present = ~np.isnan(views)
    count = present.sum(axis=1)
    first = np.argmax(present, axis=1)
    ref = views[np.arange(n), first]
    acc = np.where(present, views - ref[:, None], 0.0).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        out[:] = np.where(count > 0, ref + acc / np.maximum(count, 1), fallback)
    tail = history[-window_size:]
    tail = tail[~np.isnan(tail)]
    window[:tail.shape[0]] = tail
    return tail.shape[0]


# ---------------------------------------------------------------------------
# confidence-interval tail trimming on one row of counts


@njit
def _trim_loop(row, alpha):
    K = row.shape[0]
    total = 0
    for j in range(K):
        total += row[j]
    limit = 0.5 * alpha * total * (1.0 + TRIM_RTOL)
    i = 0
    left = 0
    while i < K - 1 and left + row[i] <= limit:
        left += row[i]
        i += 1
    j = K - 1
    right = 0
    while j > i and right + row[j] <= limit:
        right += row[j]
        j -= 1
    return i, j, total - left - right, total


def _trim_numpy(row, alpha):
    K = row.shape[0]
    total = int(row.sum())
    limit = 0.5 * alpha * total * (1.0 + TRIM_RTOL)
    cl = np.cumsum(row)
    i = min(int(np.searchsorted(cl, limit, side="right")), K - 1)
    left = int(cl[i - 1]) if i > 0 else 0
    cr = np.cumsum(row[::-1])
    r = int(np.searchsorted(cr, limit, side="right"))
    j = max(K - 1 - r, i)
    right = int(row[j + 1:].sum())
    return i, j, total - left - right, total


@njit
def _interval_walk_loop(values, edges, counts, last_bin, alpha, lows, highs, kept, totals):
    # frozen matrix: counts are not updated while walking
    kmax = edges.shape[0] - 2
    for t in range(values.shape[0]):
        if last_bin >= 0:
            i, j, k_mass, total = _trim_loop(counts[last_bin], alpha)
            if total > 0:
                lows[t] = edges[i]
                highs[t] = edges[j + 1]
            else:
                lows[t] = np.nan
                highs[t] = np.nan
            kept[t] = k_mass
            totals[t] = total
        else:
            lows[t] = np.nan
            highs[t] = np.nan
            kept[t] = 0
            totals[t] = 0
        b = np.searchsorted(edges, values[t]) - 1
        if b < 0:
            b = 0
        elif b > kmax:
            b = kmax
        last_bin = b
    return last_bin


def _interval_walk_numpy(values, edges, counts, last_bin, alpha, lows, highs, kept, totals):
    bins = _bin_indices_numpy(edges, values)
    prev = np.concatenate(([last_bin], bins[:-1]))
    K = counts.shape[0]
    # one trim per distinct row, then broadcast
    row_low = np.full(K, np.nan)
    row_high = np.full(K, np.nan)
    row_kept = np.zeros(K, dtype=np.int64)
    row_total = counts.sum(axis=1)
    for k in np.unique(prev[prev >= 0]):
        if row_total[k] > 0:
            i, j, k_mass, _ = _trim_numpy(counts[k], alpha)
            row_low[k], row_high[k], row_kept[k] = edges[i], edges[j + 1], k_mass
    rows = np.where(prev >= 0, prev, 0)
    ok = prev >= 0
    lows[:] = np.where(ok, row_low[rows], np.nan)
    highs[:] = np.where(ok, row_high[rows], np.nan)
    kept[:] = np.where(ok, row_kept[rows], 0)
    totals[:] = np.where(ok, row_total[rows], 0)
    return int(bins[-1]) if bins.shape[0] else last_bin


# ---------------------------------------------------------------------------
# exact transfer integration over a piecewise-constant bandwidth


@njit
def _transfer_loop(times, bws, end_time, start, size):
    n = times.shape[0]
    k = np.searchsorted(times, start, side="right") - 1
    t = start
    remaining = size
    while True:
        seg_end = times[k + 1] if k + 1 < n else end_time
        finish = t + remaining / bws[k]
        if finish <= seg_end or (k + 1 >= n and finish <= end_time + END_TOL):
            return True, finish, size
        remaining -= bws[k] * (seg_end - t)
        t = seg_end
        k += 1
        if k >= n:
            return False, end_time, size - remaining


def _cumulative(times, bws, end_time):
    knots = np.append(times, end_time)
    F = np.concatenate(([0.0], np.cumsum(bws * np.diff(knots))))
    return knots, F


def _transfer_numpy(times, bws, end_time, start, size, cache=None):
    knots, F = cache if cache is not None else _cumulative(times, bws, end_time)
    k = int(np.searchsorted(times, start, side="right")) - 1
    f0 = F[k] + bws[k] * (start - knots[k])
    target = f0 + size
    total = F[-1]
    if target > total:
        finish = end_time + (target - total) / bws[-1]
        if finish <= end_time + END_TOL:
            return True, finish, size
        return False, end_time, total - f0
    j = max(int(np.searchsorted(F, target, side="left")) - 1, k)
    base_t = start if j == k else knots[j]
    base_f = f0 if j == k else F[j]
    return True, base_t + (target - base_f) / bws[j], size


# ---------------------------------------------------------------------------
# dispatchers


def bin_indices(edges, values):
    values = np.ascontiguousarray(values, dtype=np.float64)
    if use_numba():
        return _bin_indices_loop(edges, values)
    return _bin_indices_numpy(edges, values)


def ecm_walk(*args):
    if use_numba():
        return _ecm_walk_loop(*args)
    return _ecm_walk_numpy(*args)


def am_walk(*args):
    if use_numba():
        return _am_walk_loop(*args)
    return _am_walk_numpy(*args)


def trim_row(row, alpha):
    row = np.ascontiguousarray(row, dtype=np.int64)
    if use_numba():
        return _trim_loop(row, alpha)
    return _trim_numpy(row, alpha)


def interval_walk(*args):
    if use_numba():
        return _interval_walk_loop(*args)
    return _interval_walk_numpy(*args)


def transfer(times, bws, end_time, start, size, cache=None):
    if use_numba():
        return _transfer_loop(times, bws, end_time, start, size)
    return _transfer_numpy(times, bws, end_time, start, size, cache)
