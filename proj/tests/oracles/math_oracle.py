"""Reference values for numerics, memctl and classifier tests.

numerics: 50-digit mpmath. memctl / classifier: float64 torch autograd on
instances whose parameters are closed-form functions of their indices (the
same formulas appear in the C++ tests)."""
import math

import mpmath as mp
import torch

mp.mp.dps = 50
torch.set_default_dtype(torch.float64)


def numerics():
    print("softplus(-3)", mp.nstr(mp.log1p(mp.e ** -3), 17))
    print("softplus(40)", mp.nstr(mp.log1p(mp.e ** 40), 17))
    print("sigmoid(2)", mp.nstr(1 / (1 + mp.e ** -2), 17))
    print("bce(logit=0.7,y=1)", mp.nstr(mp.log1p(mp.e ** -0.7), 17))
    print("bce(logit=0.7,y=0)", mp.nstr(mp.log1p(mp.e ** 0.7), 17))
    z = [mp.mpf(1), mp.mpf(2), mp.mpf(3)]
    s = sum(mp.e ** x for x in z)
    print("softmax(1,2,3)", [mp.nstr(mp.e ** x / s, 17) for x in z])
    print("ln4", mp.nstr(mp.log(4), 17))


def memctl():
    d, l, K = 3, 4, 2
    W_MM = torch.tensor([[0.1 * math.sin(1 + i * 3 + j) for j in range(d)] for i in range(d)], requires_grad=True)
    W_EM = torch.tensor([[0.2 * math.cos(2 + i + j * 2) for j in range(d)] for i in range(d)], requires_grad=True)
    b = torch.tensor([0.05 * (i - 1) for i in range(d)], requires_grad=True)
    W_in = torch.tensor([[0.3 * math.sin(0.5 + i * 4 + j * 1.5) for j in range(l)] for i in range(d)], requires_grad=True)
    W_out = torch.tensor([[0.4 * math.cos(k * 2 + i * 1.3) for i in range(d)] for k in range(K)], requires_grad=True)
    b_out = torch.tensor([0.1 * k for k in range(K)], requires_grad=True)
    # (preference, target) per step; e_t[j] = sin(1.7 t + 0.9 j)
    steps = [(True, 0), (False, None), (True, 1), (False, 1), (True, 0)]
    M = torch.zeros(d)
    loss = torch.zeros(())
    Ms = []
    for t, (pref, target) in enumerate(steps):
        if pref:
            e = torch.tensor([math.sin(1.7 * t + 0.9 * j) for j in range(l)])
            E = W_in @ e
            f = torch.sigmoid(W_MM @ M + W_EM @ E + b)
            M = f * M + (1 - f) * E
        Ms.append(M.detach().clone())
        if target is not None:
            loss = loss - torch.log_softmax(W_out @ M + b_out, 0)[target]
    loss.backward()
    print("memctl final M", [repr(x) for x in Ms[-1].tolist()])
    print("memctl loss", repr(loss.item()))
    for name, p in [("W_MM", W_MM), ("W_EM", W_EM), ("b", b), ("W_in", W_in), ("W_out", W_out), ("b_out", b_out)]:
        print("grad", name, [repr(x) for x in p.grad.flatten().tolist()])


def classifier():
    l, h = 4, 3
    W1 = torch.tensor([[0.5 * math.sin(i * 2 + j + 0.3) for j in range(l)] for i in range(h)], requires_grad=True)
    b1 = torch.tensor([0.1 * i for i in range(h)], requires_grad=True)
    W2 = torch.tensor([[0.7 * math.cos(i + 0.2) for i in range(h)]], requires_grad=True)
    b2 = torch.tensor([-0.05], requires_grad=True)
    X = torch.tensor([[math.cos(n * 1.1 + j * 0.7) for j in range(l)] for n in range(3)])
    y = torch.tensor([1.0, 0.0, 1.0])
    logits = (W2 @ torch.tanh(W1 @ X.T + b1[:, None]) + b2[:, None]).flatten()
    loss = torch.nn.functional.binary_cross_entropy_with_logits(logits, y)
    loss.backward()
    print("clf logits", [repr(x) for x in logits.tolist()])
    print("clf loss", repr(loss.item()))
    for name, p in [("W1", W1), ("b1", b1), ("W2", W2), ("b2", b2)]:
        print("grad", name, [repr(x) for x in p.grad.flatten().tolist()])


if __name__ == "__main__":
    numerics()
    memctl()
    classifier()
