"""Slow, loop-based reference implementations used as test oracles."""

import cmath
import math


def _div(a, b):
    return 0.0 if b == 0 else a / b


def time_features(x):
    n = len(x)
    mean = sum(x) / n
    abs_mean = sum(abs(v) for v in x) / n
    var = sum((v - mean) ** 2 for v in x) / (n - 1)
    std = math.sqrt(var)
    mx, mn = max(x), min(x)
    rms = math.sqrt(sum(v * v for v in x) / n)
    xr = (sum(math.sqrt(abs(v)) for v in x) / n) ** 2
    peak = max(abs(v) for v in x)
    skew = _div(sum((v - mean) ** 3 for v in x), (n - 1) * std ** 3)
    kurt = _div(sum((v - mean) ** 4 for v in x), (n - 1) * std ** 4)
    return [mean, abs_mean, std * std, std, mx, mn, rms, xr, peak, mx - mn,
            _div(peak, rms), _div(rms, mean), _div(peak, mean), _div(peak, xr), skew, kurt]


def spectrum(x):
    """One-sided amplitude by a direct DFT sum, DC dropped, Nyquist halved."""
    n = len(x)
    m = sum(x) / n
    k_max = n // 2
    out = []
    for k in range(1, k_max + 1):
        acc = sum((x[t] - m) * cmath.exp(-2j * math.pi * k * t / n) for t in range(n))
        a = 2.0 * abs(acc) / n
        if n % 2 == 0 and k == k_max:
            a /= 2.0
        out.append(a)
    return [k / n for k in range(1, k_max + 1)], out


def freq_features(x):
    f, s = spectrum(x)
    k = len(s)
    f12 = sum(s) / k
    f13 = math.sqrt(sum((v - f12) ** 2 for v in s) / (k - 1))
    f14 = _div(sum((v - f12) ** 3 for v in s), (k - 1) * f13 ** 3)
    f15 = _div(sum((v - f12) ** 4 for v in s), (k - 1) * f13 ** 4)
    ss = sum(s)
    f2s = sum(fk * fk * sk for fk, sk in zip(f, s))
    f4s = sum(fk ** 4 * sk for fk, sk in zip(f, s))
    f16 = _div(sum(fk * sk for fk, sk in zip(f, s)), ss)
    f17 = math.sqrt(sum((fk - f16) ** 2 * sk for fk, sk in zip(f, s)) / (k - 1))
    f18 = math.sqrt(_div(f2s, ss))
    f19 = math.sqrt(_div(f4s, f2s))
    f20 = _div(f2s, math.sqrt(ss * f4s))
    f21 = _div(f17, f16)
    f22 = _div(sum((fk - f16) ** 3 * sk for fk, sk in zip(f, s)), (k - 1) * f17 ** 3)
    f23 = _div(sum((fk - f16) ** 4 * sk for fk, sk in zip(f, s)), (k - 1) * f17 ** 4)
    f24 = _div(sum(math.sqrt(abs(fk - f16)) * sk for fk, sk in zip(f, s)), (k - 1) * math.sqrt(f17))
    return [f12, f13, f14, f15, f16, f17, f18, f19, f20, f21, f22, f23, f24]


def all_features(x):
    return time_features(list(x)) + freq_features(list(x))


def relative_error(a, b):
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0 else abs(a - b) / scale


def tfidf_ranking(passages, query_terms, k):
    """Exhaustive cosine ranking over (doc_id, start, term list) passages.

    tf is the raw count and idf = ln((1 + N) / (1 + df)) + 1; ties are broken
    by (doc_id, start) after rounding scores to 12 decimals.
    """
    from collections import Counter

    n = len(passages)
    df = Counter()
    for _, _, toks in passages:
        df.update(set(toks))
    idf = {t: math.log((1 + n) / (1 + c)) + 1.0 for t, c in df.items()}

    def vec(toks):
        return {t: c * idf[t] for t, c in Counter(toks).items() if t in idf}

    q = vec(query_terms)
    nq = math.sqrt(sum(v * v for v in q.values()))
    rows = []
    for doc, start, toks in passages:
        p = vec(toks)
        npn = math.sqrt(sum(v * v for v in p.values()))
        dot = sum(w * p.get(t, 0.0) for t, w in q.items())
        s = 0.0 if nq == 0 or npn == 0 else dot / (nq * npn)
        rows.append((-round(s, 12), doc, start))
    rows.sort()
    return [(doc, start) for _, doc, start in rows[:k]]


VOCAB = ("battery pack bus voltage current charge open short circuit solar array shunt regulator load "
         "thermal insulation relay fuse converter telemetry anomaly eclipse sunlit redundancy isolate "
         "recovery margin cell string harness connector switch").split()


def random_corpus(seed, n_docs=50, words=(20, 60)):
    """Docs of random vocabulary words, short enough to stay one passage each."""
    import random

    rng = random.Random(seed)
    out = []
    for i in range(n_docs):
        body = " ".join(rng.choice(VOCAB) for _ in range(rng.randint(*words))) + "."
        out.append((f"doc{i:03d}", body))
    return out
