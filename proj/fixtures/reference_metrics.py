#!/usr/bin/env python3
# Copyright 2026 The divcap Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Standalone caption metrics used as an oracle for the C++ implementation.

Usage:
  reference_metrics.py CASES.json              print golden JSON
  reference_metrics.py CASES.json --check G    compare against golden file G
"""

import argparse
import json
import math
import re
import sys
from collections import Counter

import numpy as np

MAX_N = 4
BLEU_EPS = 1e-9
ROUGE_BETA = 1.2
CIDER_SIGMA = 6.0


def tokenize(text):
    return [t for t in re.split(r"[^0-9a-z\x80-￿]+", text.lower()) if t]


def ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu4(cand, refs):
    if not cand or not refs:
        return 0.0
    logs = 0.0
    for n in range(1, MAX_N + 1):
        c = ngrams(cand, n)
        best = Counter()
        for r in refs:
            for g, k in ngrams(r, n).items():
                best[g] = max(best[g], k)
        total = sum(c.values())
        hit = sum(min(k, best[g]) for g, k in c.items())
        p = hit / total if hit > 0 else BLEU_EPS / max(total, 1)
        logs += math.log(p)
    lens = sorted((abs(len(r) - len(cand)), len(r)) for r in refs)
    r = lens[0][1]
    bp = 1.0 if len(cand) > r else math.exp(1.0 - r / len(cand))
    return bp * math.exp(logs / MAX_N)


def lcs(a, b):
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    return table[-1][-1]


def rouge_l(cand, refs):
    if not cand or not refs:
        return 0.0
    precs, recs = [], []
    for r in refs:
        if not r:
            continue
        m = lcs(cand, r)
        precs.append(m / len(cand))
        recs.append(m / len(r))
    p, r = max(precs, default=0.0), max(recs, default=0.0)
    if p == 0.0 or r == 0.0:
        return 0.0
    b2 = ROUGE_BETA ** 2
    return (1 + b2) * p * r / (r + b2 * p)


class DocFreq:
    def __init__(self, documents):
        self.df = Counter()
        self.n_docs = len(documents)
        for refs in documents:
            seen = set()
            for r in refs:
                for n in range(1, MAX_N + 1):
                    seen.update((n, g) for g in ngrams(r, n))
            self.df.update(seen)

    def weights(self, tokens):
        log_n = math.log(max(1.0, float(self.n_docs)))
        out = []
        for n in range(1, MAX_N + 1):
            vec = {g: k * (log_n - math.log(max(1.0, self.df[(n, g)]))) for g, k in ngrams(tokens, n).items()}
            norm = math.sqrt(sum(v * v for v in vec.values()))
            out.append((vec, norm))
        return out


def cider(cand, refs, df):
    if not cand or not refs:
        return 0.0
    hw = df.weights(cand)
    score = 0.0
    for r in refs:
        rw = df.weights(r)
        pen = math.exp(-((len(cand) - len(r)) ** 2) / (2 * CIDER_SIGMA ** 2))
        for (hv, hn), (rv, rn) in zip(hw, rw):
            if hn == 0.0 or rn == 0.0:
                continue
            dot = sum(min(v, rv[g]) * rv[g] for g, v in hv.items() if g in rv)
            score += pen * dot / (hn * rn)
    return 10.0 * score / len(refs) / MAX_N


def div_n(caps, n):
    distinct, total = set(), 0
    for c in caps:
        if len(c) < n:
            continue
        g = ngrams(c, n)
        distinct.update(g)
        total += sum(g.values())
    return len(distinct) / total if total else 0.0


def m_bleu(caps):
    return sum(bleu4(c, caps[:i] + caps[i + 1:]) for i, c in enumerate(caps)) / len(caps)


def self_cider(caps, df):
    m = len(caps)
    raw = np.array([[cider(a, [b], df) for b in caps] for a in caps])
    k = np.eye(m)
    for a in range(m):
        for b in range(m):
            if a != b:
                d = math.sqrt(raw[a, a] * raw[b, b])
                k[a, b] = raw[a, b] / d if d > 0 else 0.0
    k = 0.5 * (k + k.T)
    lam = np.clip(np.linalg.eigvalsh(k), 0.0, None)
    ratio = float(lam.max() / lam.sum()) if lam.sum() > 0 else 1.0
    score = min(1.0, max(0.0, -math.log(ratio) / math.log(m)))
    return score, ratio


def consensus(preds, refs, df, top_k):
    scores = [cider(p, refs, df) for p in preds]
    order = sorted(range(len(preds)), key=lambda i: (-scores[i], i))
    return order, scores, sum(scores[i] for i in order[:top_k]) / top_k


def compute(cases):
    docs = [[tokenize(r) for r in d] for d in cases["documents"]]
    df = DocFreq(docs)
    out = {"relevance": [], "sets": [], "consensus": []}
    for case in cases["relevance"]:
        c = tokenize(case["candidate"])
        refs = [tokenize(r) for r in case["references"]]
        out["relevance"].append({"bleu4": bleu4(c, refs), "rouge_l": rouge_l(c, refs), "cider": cider(c, refs, df)})
    for case in cases["sets"]:
        caps = [tokenize(c) for c in case["captions"]]
        score, ratio = self_cider(caps, df)
        out["sets"].append({"div1": div_n(caps, 1), "div2": div_n(caps, 2), "m_bleu": m_bleu(caps),
                            "self_cider": score, "self_cider_ratio": ratio})
    for case in cases["consensus"]:
        preds = [tokenize(p) for p in case["predictions"]]
        refs = [tokenize(r) for r in case["references"]]
        order, scores, mean = consensus(preds, refs, df, case["top_k"])
        out["consensus"].append({"order": order, "cider": scores, "top_k_mean": mean})
    return out


def close(a, b, tol):
    if isinstance(a, dict):
        return a.keys() == b.keys() and all(close(a[k], b[k], tol) for k in a)
    if isinstance(a, list):
        return len(a) == len(b) and all(close(x, y, tol) for x, y in zip(a, b))
    if isinstance(a, float) or isinstance(b, float):
        return abs(a - b) <= tol
    return a == b


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("cases")
    ap.add_argument("--check", metavar="GOLDEN")
    args = ap.parse_args()
    with open(args.cases) as f:
        result = compute(json.load(f))
    if args.check:
        with open(args.check) as f:
            golden = json.load(f)
        if not close(result, golden, 1e-12):
            print("golden file is stale", file=sys.stderr)
            return 1
        print("golden file matches")
        return 0
    json.dump(result, sys.stdout, indent=1)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
