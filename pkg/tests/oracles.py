"""Reference implementations used only by the tests."""
import numpy as np

from paperecg import neural


def random_model(rng, hidden=None, layers=None, inputs=None, dropout=0.25):
    H = hidden or int(rng.integers(1, 5))
    nl = layers or int(rng.integers(1, 3))
    D = inputs or int(rng.integers(1, 4))
    m = neural.LstmModel.init(D, H, nl, dropout, int(rng.integers(0, 2**31)))
    # spread the weights beyond the init range so the gates leave their linear zone
    for p in m.params():
        p *= float(rng.uniform(1.0, 4.0))
    return m


def _loss(model, x, y, w, seed):
    _, c = neural.forward_sequence(model, x, train=True, seed=seed)
    return neural.loss_from_logit(c.logit, y, w)


def gradcheck(model, x, y, w=1.0, seed=7, eps=1e-5):
    """Largest relative error between analytic and central-difference gradients."""
    _, cache = neural.forward_sequence(model, x, train=True, seed=seed)
    grads = neural.backward_sequence(model, cache, y, w)
    worst = 0.0
    for p, g in zip(model.params(), grads):
        flat = p.reshape(-1)
        gf = g.reshape(-1)
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + eps
            model.touch()
            up = _loss(model, x, y, w, seed)
            flat[k] = old - eps
            model.touch()
            dn = _loss(model, x, y, w, seed)
            flat[k] = old
            model.touch()
            num = (up - dn) / (2 * eps)
            den = max(abs(num), abs(gf[k]), 1e-6)
            worst = max(worst, abs(num - gf[k]) / den)
    return worst


def auc_pairs_oracle(scores, labels):
    """Mann-Whitney pair count with ties counted half."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=int)
    pos, neg = s[y == 1], s[y == 0]
    if pos.size == 0 or neg.size == 0:
        return float("nan")
    gt = (pos[:, None] > neg[None, :]).sum()
    eq = (pos[:, None] == neg[None, :]).sum()
    return (gt + 0.5 * eq) / (pos.size * neg.size)
