#!/usr/bin/env python3
"""Regenerates the high-precision constants pinned in the Rust test suite.

Everything here is computed with mpmath at 60 decimal digits through an
independent code path, so the pinned values in the tests can be audited
without trusting the implementation under test. Run it and diff the output
against the constants in `crates/pate/src/*.rs` and
`crates/pate/tests/acceptance.rs`.

    python3 tools/reference_values.py           # fast sections only
    python3 tools/reference_values.py brute     # adds the slow brute-force
                                                # smooth-sensitivity cross-check
"""
import sys

import mpmath as mp

mp.mp.dps = 60

RUN_BRUTE = "brute" in sys.argv[1:]


def hdr(s):
    print("\n" + "=" * 72)
    print(s)
    print("=" * 72)


def show(name, v, digits=22):
    print(f"  {name:55s} = {mp.nstr(mp.mpf(v), digits)}")


# ----------------------------------------------------------------------
hdr("1. erfc / ln(erfc) / inverse erfc")
for x in [-6.0, -2.5, -1.0, -0.3, -1e-9, 0.0, 1e-9, 0.25, 0.5, 0.84375,
          1.0, 1.25, 2.0, 2.857142857142857, 5.0, 6.0, 10.0, 15.0, 20.0,
          26.0, 26.5, 27.226017111108288]:
    show(f"erfc({x!r})", mp.erfc(x))
for x in [1.0, 5.0, 8.0, 10.0, 26.0, 30.0, 50.0, 100.0, 1000.0]:
    show(f"ln_erfc({x!r})", mp.log(mp.erfc(x)))

_erfcinv_cache = {}


def erfcinv(y):
    """Solve erfc(x) = y in log space (stable for tiny y)."""
    y = mp.mpf(y)
    key = mp.nstr(y, 40)
    if key in _erfcinv_cache:
        return _erfcinv_cache[key]
    if y == 1:
        r = mp.mpf(0)
    elif y > 1:
        r = -erfcinv(2 - y)
    else:
        L = -mp.log(y)
        x0 = mp.sqrt(L - mp.log(mp.sqrt(mp.pi * L))) if L > 2 else mp.mpf("0.5")
        r = mp.findroot(lambda x: mp.log(mp.erfc(x)) - mp.log(y), x0)
    _erfcinv_cache[key] = r
    return r


for y in ["1e-300", "1e-100", "1e-16", "1e-10", "1e-3", "0.01", "0.1",
          "0.5", "1.0", "1.5", "1.9", "1.99"]:
    show(f"erfcinv({y})", erfcinv(y))

# ----------------------------------------------------------------------
hdr("2. mislabel-probability bound q (Gaussian vote noise)")


def q_gauss(counts, sigma):
    counts = sorted(counts, reverse=True)
    top = counts[0]
    s = sum(mp.erfc((top - c) / (2 * mp.mpf(sigma))) for c in counts[1:]) / 2
    return min(s, mp.mpf(1))


show("q([400,0], sigma=100)", q_gauss([400, 0], 100))
show("q([60,40,20], sigma=20)", q_gauss([60, 40, 20], 20))
show("q([250,0*9], sigma=40)", q_gauss([250] + [0] * 9, 40))
show("q([5000,0*9], sigma=100)", q_gauss([5000] + [0] * 9, 100), 25)
show("ln q([5000,0*9], sigma=100)",
     mp.log(mp.mpf(9) / 2 * mp.erfc(mp.mpf(25))), 25)
show("ln q([8000,0*9], sigma=100)",
     mp.log(mp.mpf(9) / 2 * mp.erfc(mp.mpf(40))), 25)
show("q([12,0,0], sigma=2.5)", q_gauss([12, 0, 0], "2.5"))
show("q([7,3,2], sigma=2.5)", q_gauss([7, 3, 2], "2.5"))

# ----------------------------------------------------------------------
hdr("3. neighbor envelopes B_U / B_L of q")


def bu(q, sigma, m):
    q = mp.mpf(q)
    if q <= 0:
        return mp.mpf(0)
    half = mp.mpf(m - 1) / 2
    return min(half * mp.erfc(erfcinv(q / half) - 1 / mp.mpf(sigma)), mp.mpf(1))


def bl(q, sigma, m):
    q = mp.mpf(q)
    if q <= 0:
        return mp.mpf(0)
    half = mp.mpf(m - 1) / 2
    return half * mp.erfc(erfcinv(q / half) + 1 / mp.mpf(sigma))


show("bu(1e-3, sigma=100, m=10)", bu("1e-3", 100, 10))
show("bl(1e-3, sigma=100, m=10)", bl("1e-3", 100, 10))
show("bu(0.2, sigma=2, m=3)", bu("0.2", 2, 3))
show("bl(0.2, sigma=2, m=3)", bl("0.2", 2, 3))
show("bl(bu(1e-4, 100, 10), 100, 10)  (inverse check)",
     bl(bu("1e-4", 100, 10), 100, 10))

# ----------------------------------------------------------------------
hdr("4. pure-DP limit of the data-dependent bound")


def dd_pure(q, lam, eps0):
    q, lam, eps0 = mp.mpf(q), mp.mpf(lam), mp.mpf(eps0)
    a = (1 - q) / (1 - q * mp.e**eps0)
    s = (1 - q) * a**(lam - 1) + q * mp.e**(eps0 * (lam - 1))
    return mp.log(s) / (lam - 1)


show("dd_pure(q=0.01, lambda=8, eps0=0.2)", dd_pure("0.01", 8, "0.2"), 25)

# ----------------------------------------------------------------------
hdr("5. release surcharge and the published fixed part")


def gnss_cost(lam, beta, sigma_ss):
    lam, beta, s = mp.mpf(lam), mp.mpf(beta), mp.mpf(sigma_ss)
    return lam * mp.e**(2 * beta) / s**2 \
        + (beta * lam - mp.log(1 - 2 * lam * beta) / 2) / (lam - 1)


g = gnss_cost(14, "0.0329", "6.23")
show("gnss_cost(14, 0.0329, 6.23)", g)
show("fixed part, conversion divided by 14", mp.mpf("1.18") + g + mp.log(10**5) / 14)
show("fixed part, conversion divided by 13", mp.mpf("1.18") + g + mp.log(10**5) / 13)

# ----------------------------------------------------------------------
hdr("6. data-dependent Gaussian bound")


def dd_gauss(q, lam, sigma):
    """Returns (epsilon, used_data_dependent); epsilon <= lam/sigma^2 always."""
    q, lam, sigma = mp.mpf(q), mp.mpf(lam), mp.mpf(sigma)
    ind = lam / sigma**2
    if q <= 0:
        return mp.mpf(0), True
    if q >= 1:
        return ind, False
    lnq = mp.log(q)
    mu2 = sigma * mp.sqrt(-lnq)
    if mu2 <= 1:
        return ind, False
    mu1 = mu2 + 1
    if mu1 < lam:
        return ind, False
    e1 = mu1 / sigma**2
    e2 = mu2 / sigma**2
    rhs = (mu2 - 1) * e2 - mu2 * (mp.log(mu1 / (mu1 - 1)) + mp.log(mu2 / (mu2 - 1)))
    if lnq > rhs:
        return ind, False
    t = mp.e**((lnq + e2) * (mu2 - 1) / mu2)
    if t >= 1:
        return ind, False
    a = (1 - q) / (1 - t)
    ln_b = lnq * (1 - (lam - 1) / (mu1 - 1)) + e1 * (lam - 1)
    s = (1 - q) * a**(lam - 1) + mp.e**ln_b
    eps = mp.log(s) / (lam - 1)
    eps = max(eps, mp.mpf(0))
    if eps <= ind:
        return eps, True
    return ind, False


for (q, lam, sg) in [("1e-3", 20, 100), ("0.01", 14, 40), ("1e-8", 20, 100),
                     ("0.3", 8, 2), ("1e-5", 8, 2), ("0.05", 8, 2)]:
    e, used = dd_gauss(q, lam, sg)
    show(f"dd_gauss(q={q}, lambda={lam}, sigma={sg}) dd={used}", e, 25)

# ----------------------------------------------------------------------
hdr("7. critical q0 (largest q where the data-dependent branch applies)")


def critical_q0(sigma, lam):
    sigma, lam = mp.mpf(sigma), mp.mpf(lam)

    def ok(q):
        e, used = dd_gauss(q, lam, sigma)
        return used

    if ok(mp.mpf("0.5")):
        return mp.mpf("0.5")
    if not ok(mp.mpf("1e-12")):
        return mp.mpf(0)
    lo, hi = mp.mpf(0), mp.mpf("0.5")
    for _ in range(200):
        mid = (lo + hi) / 2
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


Q0_TABLE = [(100, 20), (40, 14), (150, 14), (2, 4), (2, 6), (2, 8),
            (3, 8), (100, 2), (100, 256)]
for sg, lam in Q0_TABLE:
    show(f"critical_q0(sigma={sg}, lambda={lam})", critical_q0(sg, lam), 18)

# ----------------------------------------------------------------------
hdr("8. RDP -> (epsilon, delta) minimization, k=1000, sigma=150, delta=1e-8")
k, sg, delta = 1000, mp.mpf(150), mp.mpf("1e-8")
f = lambda lam: k * lam / sg**2 + mp.log(1 / delta) / (lam - 1)
lam_star = 1 + mp.sqrt(mp.log(1 / delta) * sg**2 / k)
show("continuous minimizer lambda*", lam_star)
show("continuous minimum", f(lam_star))
grid = [mp.mpf("1.5"), mp.mpf("1.75")] + [mp.mpf(i) for i in range(2, 257)]
best = min((f(l), l) for l in grid)
show("grid minimum", best[0])
show("grid argmin", best[1])

# ----------------------------------------------------------------------
hdr("9. Laplace difference tail (per-challenger term of the Laplace q)")
b = mp.mpf(100)
show("Pr[L2 - L1 > 400], scale 100 (closed form)",
     (2 + 400 / b) * mp.e**(-400 / b) / 4)


def q_laplace(counts, gamma):
    counts = sorted(counts, reverse=True)
    top = counts[0]
    s = sum((2 + mp.mpf(gamma) * (top - c)) * mp.e**(-mp.mpf(gamma) * (top - c)) / 4
            for c in counts[1:])
    return min(s, mp.mpf(1))


show("q_laplace([400,0], gamma=0.01)", q_laplace([400, 0], "0.01"))
show("q_laplace([60,40,20], gamma=0.05)", q_laplace([60, 40, 20], "0.05"))

# ----------------------------------------------------------------------
hdr("10. smooth sensitivity of the cost curve (sigma=2.5, lambda=3, m=3)")
SIGMA = mp.mpf("2.5")
LAM = mp.mpf(3)
M_CLASSES = 3
N_TOTAL = 12
Q0 = critical_q0(SIGMA, LAM)
Q1 = bl(Q0, SIGMA, M_CLASSES)


def M_of(q):
    if mp.mpf(q) > Q0:
        return LAM / SIGMA**2
    e, _ = dd_gauss(q, LAM, SIGMA)
    return e


def ls_tilde(q):
    q = mp.mpf(q)
    if Q1 <= q <= Q0:
        q = Q1
    up = M_of(bu(q, SIGMA, M_CLASSES)) - M_of(q)
    down = M_of(q) - M_of(bl(q, SIGMA, M_CLASSES))
    return max(up, down, mp.mpf(0))


def q_of(counts):
    return q_gauss(counts, SIGMA)


show("q0", Q0, 25)
show("q1", Q1, 25)
show("flat value ls(q1)", ls_tilde(Q1), 25)
show("cost at q1", M_of(Q1), 25)
for h in [[7, 3, 2], [12, 0, 0], [5, 4, 3], [4, 4, 4], [10, 1, 1], [9, 2, 1]]:
    show(f"ls(q({h}))", ls_tilde(q_of(h)), 25)


def at_distance(counts, d):
    """Largest ls reachable within d vote moves; True when no further distance
    can improve it."""
    s = sorted(counts, reverse=True)
    q = q_of(s)
    if Q1 <= q <= Q0:
        return ls_tilde(q), True
    if q < Q1:
        if s[0] - s[1] < 2 * d:
            return ls_tilde(Q1), True
        s2 = list(s)
        s2[0] -= d
        s2[1] += d
        qp = q_of(s2)
        if qp > Q1:
            return ls_tilde(Q0), True
        return ls_tilde(qp), False
    if sum(s[1:]) <= d:
        return ls_tilde(q_of([sum(s)] + [0] * (len(s) - 1))), True
    s2 = list(s)
    s2[0] += d
    for _ in range(d):
        j = max(range(1, len(s2)), key=lambda i: s2[i])
        s2[j] -= 1
    qp = q_of(s2)
    if qp < Q0:
        return ls_tilde(Q0), True
    return ls_tilde(qp), False


for h, d in [([12, 0, 0], 0), ([12, 0, 0], 2), ([12, 0, 0], 6)]:
    v, stop = at_distance(h, d)
    show(f"at_distance({h}, d={d}) stop={stop}", v, 25)


def smooth_sens(counts, beta):
    best = mp.mpf(0)
    d = 0
    while True:
        v, stop = at_distance(counts, d)
        best = max(best, v * mp.e**(-mp.mpf(beta) * d))
        if stop or d >= sum(counts):
            return best
        d += 1


for h in [[7, 3, 2], [12, 0, 0], [5, 4, 3], [4, 4, 4], [10, 1, 1], [9, 2, 1]]:
    for beta in ["0.02", "0.05", "0.1"]:
        show(f"smooth_sens({h}, beta={beta})", smooth_sens(h, beta), 25)

# ----------------------------------------------------------------------
if RUN_BRUTE:
    hdr("11. brute-force smooth-sensitivity cross-check (slow)")
    DMAX = 34
    HI = N_TOTAL + DMAX

    ls_global = mp.mpf(0)
    gap_cache = {}
    for g3 in range(0, HI + 21):
        for g2 in range(0, g3 + 1):
            v = ls_tilde(q_of([g3 + 1, g3 + 1 - g2, 1]))
            gap_cache[(g2, g3)] = v
            ls_global = max(ls_global, v)
    show("global max ls over the gap box", ls_global, 25)

    def brute(counts, betas):
        n0 = sorted(counts, reverse=True)
        per_dist = [mp.mpf(0)] * (DMAX + 1)
        for a in range(HI + 1):
            for bb in range(HI + 1):
                for c in range(HI + 1):
                    inc = sum(max(x - y, 0) for x, y in zip((a, bb, c), n0))
                    dec = sum(max(y - x, 0) for x, y in zip((a, bb, c), n0))
                    dist = max(inc, dec)
                    if dist > DMAX:
                        continue
                    s = sorted((a, bb, c), reverse=True)
                    v = gap_cache[(s[0] - s[1], s[0] - s[2])]
                    if v > per_dist[dist]:
                        per_dist[dist] = v
        for d in range(1, DMAX + 1):
            per_dist[d] = max(per_dist[d], per_dist[d - 1])
        out = {}
        for beta in betas:
            beta = mp.mpf(beta)
            best = max(per_dist[d] * mp.e**(-beta * d) for d in range(DMAX + 1))
            sound = ls_global * mp.e**(-beta * (DMAX + 1)) <= best
            out[beta] = (best, sound)
        return out

    betas = ["0.02", "0.05", "0.1"]
    worst = mp.mpf(0)
    for a in range(N_TOTAL + 1):
        for bb in range(N_TOTAL + 1 - a):
            h = [a, bb, N_TOTAL - a - bb]
            res = brute(h, betas)
            for beta in betas:
                bv, sound = res[mp.mpf(beta)]
                av = smooth_sens(h, beta)
                worst = max(worst, abs(av - bv))
                assert sound, (h, beta)
    show("worst |walk - brute| over all n=12 histograms", worst, 10)
