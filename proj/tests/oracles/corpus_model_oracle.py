"""Naive-Bayes conditionals and bigram completion probabilities for a small corpus."""
import heapq
import math

from token_oracle import units

# (age, gender, disease, symptoms, duration, complaint index)
RECORDS = [
    (34, "female", "asthma", "cough, wheezing", "two weeks", 0),
    (36, "female", "asthma", "cough, wheezing", "one week", 0),
    (38, "female", "migraine", "headache", "two weeks", 1),
    (62, "male", "gout", "joint pain", "three days", 2),
    (65, "male", "gout", "joint pain, swelling", "three days", 2),
    (67, "male", "hypertension", "headache, dizziness", "one month", 3),
    (31, "male", "asthma", "cough", "two weeks", 0),
    (45, "female", "migraine", "headache, nausea", "one day", 1),
]
ALPHA = 1.0
AGE_BANDS = 13


def norm(text):
    return " ".join(units(text))


def disease_conditional(evidence):
    """P(disease | evidence) with evidence a dict over age band / gender."""
    diseases = []
    for r in RECORDS:
        if r[2] not in diseases:
            diseases.append(r[2])
    N, D = len(RECORDS), len(diseases)
    logs = []
    for d in diseases:
        c = sum(1 for r in RECORDS if r[2] == d)
        s = math.log((c + ALPHA) / (N + ALPHA * D))
        if "band" in evidence:
            j = sum(1 for r in RECORDS if r[2] == d and r[0] // 10 == evidence["band"])
            s += math.log((j + ALPHA) / (c + ALPHA * AGE_BANDS))
        if "gender" in evidence:
            j = sum(1 for r in RECORDS if r[2] == d and r[1] == evidence["gender"])
            s += math.log((j + ALPHA) / (c + ALPHA * 2))
        logs.append(s)
    m = max(logs)
    w = [math.exp(x - m) for x in logs]
    z = sum(w)
    return {d: x / z for d, x in zip(diseases, w)}


def bigram_probs(texts, max_units=12):
    """Every completion of the unit bigram chain with its probability, descending."""
    counts = {}
    for t in texts:
        prev = "<s>"
        for u in units(t):
            counts.setdefault(prev, {}).setdefault(u, 0)
            counts[prev][u] += 1
            prev = u
        counts.setdefault(prev, {}).setdefault("</s>", 0)
        counts[prev]["</s>"] += 1
    out = {}
    heap = [(0.0, ("<s>",))]
    while heap and len(out) < 200:
        cost, seq = heapq.heappop(heap)
        last = seq[-1]
        if last == "</s>":
            text = " ".join(seq[1:-1])
            out.setdefault(text, math.exp(-cost))
            continue
        total = sum(counts[last].values())
        for nxt, c in counts[last].items():
            if nxt != "</s>" and len(seq) > max_units:
                continue
            heapq.heappush(heap, (cost - math.log(c / total), seq + (nxt,)))
    return sorted(out.items(), key=lambda kv: -kv[1])


BIGRAM_TEXTS = ["chest pain", "chest pain", "chest pain, cough", "back pain", "cough",
                "cough, fever", "fever"]


def expected():
    return {
        "records": [list(r) for r in RECORDS],
        "disease_given_band3_female": disease_conditional({"band": 3, "gender": "female"}),
        "disease_given_band6_male": disease_conditional({"band": 6, "gender": "male"}),
        "disease_marginal": disease_conditional({}),
        "bigram_texts": BIGRAM_TEXTS,
        "bigram_max_units": 12,
        "bigram": [[t, p] for t, p in bigram_probs(BIGRAM_TEXTS)][:40],
    }
