"""Independent reference implementations used to verify the library.

Everything here is written the slow, obvious way (explicit loops, naive
DFT, exhaustive pair counting) and shares no code with the package.
"""

import math

import numpy as np


def naive_mfcc_dd(samples, sample_rate, window_s=0.025, step_s=0.010, num_ceps=13,
                  mel_filters=26, fft_size=None, delta_window=2, log_floor=1e-10):
    """Brute-force MFCC + deltas: naive DFT, loop-built filterbank, cosine DCT."""
    x = np.asarray(samples, dtype=np.float64)
    win_len = int(round(window_s * sample_rate))
    hop = int(round(step_s * sample_rate))
    if fft_size is None:
        fft_size = 1
        while fft_size < win_len:
            fft_size *= 2

    # Hamming window from the formula, not numpy's helper
    window = np.array([0.54 - 0.46 * math.cos(2 * math.pi * i / (win_len - 1))
                       for i in range(win_len)])

    # DFT straight from the definition: X[k] = sum_t x[t] e^{-2 pi i k t / N}
    n_bins = fft_size // 2 + 1
    k_grid = np.arange(n_bins)[:, None]
    t_grid = np.arange(fft_size)[None, :]
    dft = np.exp(-2j * math.pi * k_grid * t_grid / fft_size)

    # triangular mel filterbank built point by point
    def mel(f):
        return 2595.0 * math.log10(1.0 + f / 700.0)

    def imel(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    edges = [imel(mel(0.0) + (mel(sample_rate / 2.0) - mel(0.0)) * j / (mel_filters + 1))
             for j in range(mel_filters + 2)]
    fbank = np.zeros((mel_filters, n_bins))
    for m in range(mel_filters):
        lo, center, hi = edges[m], edges[m + 1], edges[m + 2]
        for k in range(n_bins):
            f = k * sample_rate / fft_size
            if lo <= f <= center:
                fbank[m, k] = (f - lo) / (center - lo)
            elif center < f <= hi:
                fbank[m, k] = (hi - f) / (hi - center)

    n_frames = 1 + (len(x) - win_len) // hop
    padded = np.zeros((n_frames, fft_size))
    for i in range(n_frames):
        padded[i, :win_len] = x[i * hop:i * hop + win_len] * window
    magnitude = np.abs(padded @ dft.T)

    ceps = np.zeros((n_frames, num_ceps))
    for i in range(n_frames):
        logs = np.log(np.maximum(fbank @ magnitude[i], log_floor))
        for j in range(num_ceps):
            total = 0.0
            for m in range(mel_filters):
                total += logs[m] * math.cos(math.pi * j * (2 * m + 1) / (2 * mel_filters))
            scale = math.sqrt(1.0 / mel_filters) if j == 0 else math.sqrt(2.0 / mel_filters)
            ceps[i, j] = scale * total

    def deltas(mat):
        out = np.zeros_like(mat)
        denom = 2.0 * sum(k * k for k in range(1, delta_window + 1))
        for i in range(mat.shape[0]):
            acc = np.zeros(mat.shape[1])
            for k in range(1, delta_window + 1):
                plus = mat[min(i + k, mat.shape[0] - 1)]
                minus = mat[max(i - k, 0)]
                acc += k * (plus - minus)
            out[i] = acc / denom
        return out

    d1 = deltas(ceps)
    d2 = deltas(d1)
    return np.hstack([ceps, d1, d2])


def pairwise_auc(labels_positive, scores):
    """AUC by exhaustive positive/negative pair counting (ties count 1/2)."""
    wins = 0.0
    pairs = 0
    for is_pos_i, score_i in zip(labels_positive, scores):
        if not is_pos_i:
            continue
        for is_pos_j, score_j in zip(labels_positive, scores):
            if is_pos_j:
                continue
            pairs += 1
            if score_i > score_j:
                wins += 1.0
            elif score_i == score_j:
                wins += 0.5
    return wins / pairs


def kappa_by_tabulation(a, b):
    """Cohen's kappa from an explicitly tabulated joint distribution."""
    n = len(a)
    labels = sorted(set(a) | set(b))
    joint = {(x, y): 0 for x in labels for y in labels}
    for x, y in zip(a, b):
        joint[(x, y)] += 1
    p_o = sum(joint[(lab, lab)] for lab in labels) / n
    p_e = 0.0
    for lab in labels:
        pa = sum(joint[(lab, y)] for y in labels) / n
        pb = sum(joint[(x, lab)] for x in labels) / n
        p_e += pa * pb
    if p_e >= 1.0:
        return 1.0
    return (p_o - p_e) / (1.0 - p_e)


def finite_difference_gradient(func, w, h=1e-5):
    """Central finite differences of a scalar function."""
    w = np.asarray(w, dtype=np.float64)
    grad = np.zeros_like(w)
    for i in range(w.size):
        shift = np.zeros_like(w)
        shift[i] = h
        grad[i] = (func(w + shift) - func(w - shift)) / (2 * h)
    return grad


def frame_overlap_labels(segments, scheme_order, rest_id, step, n_frames, fine=10000):
    """Frame labels by brute-force sub-sampling each frame interval.

    Each frame is cut into `fine` slivers; a sliver counts toward the class
    of the segment covering its midpoint. Mirrors the >= 50% dominant-overlap
    rule without interval arithmetic.
    """
    out = []
    for k in range(n_frames):
        cover = {cid: 0 for cid in scheme_order}
        for j in range(fine):
            t = (k + (j + 0.5) / fine) * step
            for from_s, to_s, cid in segments:
                if from_s <= t < to_s:
                    cover[cid] += 1
                    break
        best_id, best_count = rest_id, 0
        for cid in scheme_order:  # earlier scheme order wins ties
            if cover[cid] > best_count:
                best_id, best_count = cid, cover[cid]
        out.append(best_id if best_count >= fine / 2 else rest_id)
    return out
