"""Independent brute-force oracles, deliberately kept free of the package's
numpy code paths: plain python lists, math.dist, and sorted() only."""

import math


def oracle_lof(point, window, k, floor=1e-9):
    """Batch LOF of ``point`` against ``window`` by exhaustive enumeration."""
    n = len(window)
    if n < k + 1:
        return 1.0

    def dist(a, b):
        return math.dist(a, b)

    def kdist(target, exclude):
        ds = sorted(dist(target, window[j]) for j in range(n) if j != exclude)
        return ds[k - 1]

    def neighbors(target, exclude):
        kd = kdist(target, exclude)
        return [j for j in range(n) if j != exclude and dist(target, window[j]) <= kd]

    kd_w = [kdist(window[i], i) for i in range(n)]

    def lrd(target, exclude):
        nb = neighbors(target, exclude)
        reach = [max(kd_w[j], dist(target, window[j]), floor) for j in nb]
        return len(reach) / sum(reach)

    lrd_w = [lrd(window[i], i) for i in range(n)]
    nb_p = neighbors(point, -1)
    reach_p = [max(kd_w[j], dist(point, window[j]), floor) for j in nb_p]
    lrd_p = len(reach_p) / sum(reach_p)
    return (sum(lrd_w[j] for j in nb_p) / len(nb_p)) / lrd_p


def oracle_perceptron(samples, passes=5):
    """Averaged multiclass perceptron over (features, label) pairs; returns a
    predict(features) function.  Pure python mirror of the training rule."""
    labels = sorted({y for _, y in samples})
    dim = len(samples[0][0])
    w = {l: [0.0] * dim for l in labels}
    b = {l: 0.0 for l in labels}
    acc_w = {l: [0.0] * dim for l in labels}
    acc_b = {l: 0.0 for l in labels}
    steps = 0

    def argmax(weights, biases, x):
        best_label, best_score = None, None
        for l in labels:
            score = sum(wi * xi for wi, xi in zip(weights[l], x)) + biases[l]
            if best_score is None or score > best_score or (score == best_score and l < best_label):
                best_label, best_score = l, score
        return best_label

    for _ in range(passes):
        for x, y in samples:
            pred = argmax(w, b, x)
            if pred != y:
                for i in range(dim):
                    w[y][i] += x[i]
                    w[pred][i] -= x[i]
                b[y] += 1.0
                b[pred] -= 1.0
            for l in labels:
                for i in range(dim):
                    acc_w[l][i] += w[l][i]
                acc_b[l] += b[l]
            steps += 1

    avg_w = {l: [v / steps for v in acc_w[l]] for l in labels}
    avg_b = {l: acc_b[l] / steps for l in labels}

    def predict(x):
        return argmax(avg_w, avg_b, x)

    return predict
