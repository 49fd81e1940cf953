"""
Checking the network's gradients numerically
============================================

Every parameter tensor of a tiny network is compared against central
finite differences of the cross-entropy loss.
"""
import numpy as np

from trailgate.neural import NetConfig, Network, cross_entropy, cross_entropy_grad

config = NetConfig(seq_len=5, num_classes=3, embed_dim=4, gru_hidden=6, heads=2, ffn_dim=8, fc_dim=6,
                   dropout=0.0)
net = Network(config)
rng = np.random.default_rng(0)
X = rng.random((4, 5))
y = np.array([0, 2, 1, 2])

net.backward(cross_entropy_grad(net.forward(X), y))
analytic = {k: v.copy() for k, v in net.grads().items()}

h = 1e-5
print("%-28s %10s" % ("tensor", "rel error"))
for name, arr in net.params().items():
    num = np.zeros_like(arr)
    for i in np.ndindex(arr.shape):
        old = arr[i]
        arr[i] = old + h
        up = cross_entropy(net.forward(X), y)
        arr[i] = old - h
        down = cross_entropy(net.forward(X), y)
        arr[i] = old
        num[i] = (up - down) / (2 * h)
    a = analytic[name]
    scale = np.linalg.norm(a) + np.linalg.norm(num)
    err = np.linalg.norm(a - num) / scale if scale > 1e-7 else np.linalg.norm(a - num)
    print("%-28s %10.2e" % (name, err))
