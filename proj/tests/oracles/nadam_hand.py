"""Hand evaluation of the Nadam update on f(x) = x^2 / 2.

Written out term by term with mpmath, independent of the C++ code.
Prints the parameter after step 1 and |x| after 200 steps.
"""
from mpmath import mp, mpf, sqrt

mp.dps = 40
lr, b1, b2, eps, decay = mpf("0.1"), mpf("0.9"), mpf("0.999"), mpf("1e-8"), mpf("0.004")


def mu(t):
    return b1 * (1 - mpf("0.5") * mpf("0.96") ** (t * decay))


def run(steps):
    x, m, v, prod = mpf(1), mpf(0), mpf(0), mpf(1)
    for t in range(1, steps + 1):
        g = x
        mt, mn = mu(t), mu(t + 1)
        prod *= mt
        g_hat = g / (1 - prod)
        m = b1 * m + (1 - b1) * g
        m_hat = m / (1 - prod * mn)
        v = b2 * v + (1 - b2) * g * g
        v_hat = v / (1 - b2 ** t)
        x = x - lr * ((1 - mt) * g_hat + mn * m_hat) / (sqrt(v_hat) + eps)
    return x


print("after 1 step:", mp.nstr(run(1), 25))
print("after 200 steps:", mp.nstr(run(200), 25))
