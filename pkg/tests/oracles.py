"""Independent reference computations and frozen derived values.

Frozen numbers were produced once with mpmath at 40 digits or by direct
enumeration, independently of the package code.
"""

from fractions import Fraction

# (p, C1) -> (a, c): smallest power of two with (1 + 2^(p-1) or 2) / C1^(p log2 a) < 1
CONSTANTS_TABLE = {
    (2.0, 2.0): (2, 0.75),
    (1.0, 2.0): (4, 0.5),
    (0.5, 2.0): (8, 2 ** -0.5),
}

# sum_{m>=1} (4/3) 2^-m h(m), h(m) = 2^(1 - floor(log2 m)); closed-form double geometric sum
FCON_TOTAL = 1.914057413698174059386504219463602064858
FCON_PARTIAL_40 = 1.914057413698098268165873984495798746745

# sum_{n=1}^{100} n^-2
BC_PARTIAL_100 = 1.634983900184892865077169498180323766683

# (2^n + 1) / phi(2^n)^2 for phi = sqrt(x log x (log log x)^1.5) clamped below e^e, n = 0..20
SQRT_LOG_TERMS = [
    0.048551283501549361, 0.072826925252324042, 0.1213782087538734, 0.21848077575697213,
    0.37211984439018016, 0.21473414892992577, 0.14352305636813338, 0.10464516864438196,
    0.080754886483995379, 0.064840971530680987, 0.053606337155201313, 0.04532171621948791,
    0.039002216221308659, 0.034049702969465868, 0.03008184308661787, 0.026843857097572959,
    0.024160016415617841, 0.021905557897795332, 0.019989691864894014, 0.018344930955496201,
    0.016920170186612645,
]


def block_base_bruteforce(p, c1, a_max=2 ** 4000):
    """Walk a = 2, 4, 8, ... evaluating the contraction constant directly."""
    a, k = 2, 1
    num = 1 + 2 ** (p - 1) if p > 1 else 2
    while a <= a_max:
        c = num / c1 ** (p * k)
        if c < 1 - 1e-12:
            return a, c
        a, k = 2 * a, k + 1
    raise AssertionError("no admissible base")


def inclusive_sum(xi, m, n):
    total = 0.0
    for k in range(m, m + n + 1):
        total += xi[k]
    return total


def running_max_naive(xi, m, n):
    return max(abs(inclusive_sum(xi, m, k)) for k in range(n + 1))


def recursion_naive(terms, c, f0=0.0):
    """F_{n+1} = c^{n+1} F0 + sum_{k<=n} c^{n-k} max(t_k, 0), double loop."""
    t = [max(x, 0.0) for x in terms]
    out = []
    for n in range(len(t)):
        acc = c ** (n + 1) * f0
        for k in range(n + 1):
            acc += c ** (n - k) * t[k]
        out.append(acc)
    return out


def geometric_h_exact(m):
    """h(m) for a = 2, phi(x) = x: sum_{n >= floor(log2 m)} 2^-n as a Fraction."""
    j = m.bit_length() - 1
    return Fraction(2, 2 ** j)


def ma_autocov(coeffs, m):
    return sum(coeffs[j] * coeffs[j + m] for j in range(len(coeffs) - m)) if m < len(coeffs) else 0.0
