"""Reference values for the five-clip metric fixture in metric_fixture.hpp.

Written independently of the C++ scorers: LCS by subsequence enumeration,
METEOR alignments by exhaustive search over matchings.
"""
import itertools
import math
from collections import Counter

FIXTURE = [
    ("c1", "a dog is barking loudly",
     ["a dog barks loudly", "the dog is barking", "a loud dog is barking outside"]),
    ("c2", "birds are singing in the trees",
     ["birds sing in the trees", "many birds are chirping", "birds singing in a forest"]),
    ("c3", "a car passes by",
     ["a car drives past on a wet road", "a vehicle passes by quickly"]),
    ("c4", "rain falls on a roof",
     ["rain is falling on a metal roof", "heavy rain falls on the roof", "rain falls on a tin roof"]),
    ("c5", "the the the", ["the cat", "a cat meows"]),
]


def grams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(corpus, n):
    matched, total = [0] * n, [0] * n
    c_len = r_len = 0
    for cand, refs in corpus:
        c_len += len(cand)
        r_len += min((abs(len(r) - len(cand)), len(r)) for r in refs)[1]
        for k in range(1, n + 1):
            cg = grams(cand, k)
            best = Counter()
            for r in refs:
                best |= grams(r, k)
            total[k - 1] += sum(cg.values())
            matched[k - 1] += sum(min(c, best[g]) for g, c in cg.items())
    if any(m == 0 for m in matched):
        return 0.0
    bp = 1.0 if c_len >= r_len else math.exp(1 - r_len / c_len)
    return bp * math.exp(sum(math.log(m / t) for m, t in zip(matched, total)) / n)


def is_subsequence(sub, seq):
    it = iter(seq)
    return all(tok in it for tok in sub)


def lcs(a, b):
    for size in range(len(a), 0, -1):
        for idx in itertools.combinations(range(len(a)), size):
            if is_subsequence([a[i] for i in idx], b):
                return size
    return 0


def rouge_pair(c, r, beta=1.2):
    l = lcs(c, r)
    if l == 0:
        return 0.0
    p, rec = l / len(c), l / len(r)
    return (1 + beta ** 2) * rec * p / (rec + beta ** 2 * p)


def matchings(c, r, i=0, used=frozenset()):
    if i == len(c):
        yield []
        return
    for rest in matchings(c, r, i + 1, used):
        yield rest
    for j, tok in enumerate(r):
        if tok == c[i] and j not in used:
            for rest in matchings(c, r, i + 1, used | {j}):
                yield [(i, j)] + rest


def chunks(m):
    m = sorted(m)
    count = 0
    for k, (i, j) in enumerate(m):
        if k == 0 or i != m[k - 1][0] + 1 or j != m[k - 1][1] + 1:
            count += 1
    return count


def meteor_pair(c, r):
    best_m, best_ch = 0, 0
    for m in matchings(c, r):
        if len(m) > best_m or (len(m) == best_m and chunks(m) < best_ch):
            best_m, best_ch = len(m), chunks(m)
    if best_m == 0:
        return 0.0
    p, rec = best_m / len(c), best_m / len(r)
    fmean = 10 * p * rec / (rec + 9 * p)
    return fmean * (1 - 0.5 * (best_ch / best_m) ** 3)


def cider_d(corpus, sigma=6.0):
    m = len(corpus)
    df = Counter()
    for _, refs in corpus:
        df.update({g for r in refs for n in range(1, 5) for g in grams(r, n)})

    def vec(tokens, n):
        return {g: tf * (math.log(m) - math.log(max(1.0, df[g]))) for g, tf in grams(tokens, n).items()}

    scores = []
    for cand, refs in corpus:
        clip = 0.0
        for r in refs:
            pen = math.exp(-((len(cand) - len(r)) ** 2) / (2 * sigma ** 2))
            s = 0.0
            for n in range(1, 5):
                vc, vr = vec(cand, n), vec(r, n)
                nc = math.sqrt(sum(v * v for v in vc.values()))
                nr = math.sqrt(sum(v * v for v in vr.values()))
                if nc and nr:
                    s += sum(min(v, vr[g]) * vr[g] for g, v in vc.items() if g in vr) / (nc * nr) * pen
            clip += s / 4
        scores.append(10 * clip / len(refs))
    return sum(scores) / m


def main():
    corpus = [(c.split(), [r.split() for r in refs]) for _, c, refs in FIXTURE]
    for n in range(1, 5):
        print(f"BLEU_{n} {bleu(corpus, n)!r}")
    print(f"ROUGE_L {sum(max(rouge_pair(c, r) for r in refs) for c, refs in corpus) / len(corpus)!r}")
    print(f"METEOR {sum(max(meteor_pair(c, r) for r in refs) for c, refs in corpus) / len(corpus)!r}")
    print(f"CIDEr {cider_d(corpus)!r}")


if __name__ == "__main__":
    main()
