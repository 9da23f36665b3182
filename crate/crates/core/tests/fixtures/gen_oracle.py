"""Regenerates the channel/SINR oracle tables with 50-digit arithmetic.

Run from this directory: python3 gen_oracle.py
"""
import random

from mpmath import mp, mpf, log10, exp, sqrt, nstr

mp.dps = 50
rng = random.Random(20240601)


def pl_los(d, fc):
    return mpf("32.4") + mpf("17.3") * log10(d) + 20 * log10(fc)


def pl_nlos(d, fc):
    return mpf("32.4") + mpf("31.9") * log10(d) + 20 * log10(fc)


def p_los(d2):
    if d2 < mpf("1.2"):
        return mpf(1)
    if d2 <= mpf("6.5"):
        return exp(-(d2 - mpf("1.2")) / mpf("4.7"))
    return exp(-(mpf("6.5") - mpf("1.2")) / mpf("4.7")) * exp(-(d2 - mpf("6.5")) / mpf("32.6"))


def g(x):
    return nstr(x, 30, strip_zeros=False)


def f(x):
    return repr(float(x))


with open("pathloss.csv", "w") as out:
    out.write("d_3d,fc_ghz,pl_los_db,pl_nlos_db\n")
    for _ in range(1000):
        d = rng.uniform(0.5, 150.0)
        fc = rng.uniform(0.5, 100.0)
        out.write(f"{f(d)},{f(fc)},{g(pl_los(mpf(d), mpf(fc)))},{g(pl_nlos(mpf(d), mpf(fc)))}\n")

with open("los_probability.csv", "w") as out:
    out.write("d_2d,p_los\n")
    for _ in range(1000):
        d = rng.choice([rng.uniform(0.0, 1.2), rng.uniform(1.2, 6.5), rng.uniform(6.5, 200.0)])
        out.write(f"{f(d)},{g(p_los(mpf(d)))}\n")

with open("link_gain.csv", "w") as out:
    out.write("x1,y1,z1,x2,y2,z2,beta,fc_ghz,los,gain\n")
    for _ in range(1000):
        a = [rng.uniform(0, 120), rng.uniform(0, 50), rng.choice([1.0, 3.0])]
        b = [rng.uniform(0, 120), rng.uniform(0, 50), rng.choice([1.0, 3.0])]
        beta = rng.expovariate(1.0) + 1e-3
        fc = 5.0
        los = rng.choice(["mixture", "los", "nlos"])
        A = [mpf(v) for v in a]
        B = [mpf(v) for v in b]
        d2 = sqrt((A[0] - B[0]) ** 2 + (A[1] - B[1]) ** 2)
        d3 = max(sqrt(d2 ** 2 + (A[2] - B[2]) ** 2), mpf("0.5"))
        gl = mpf(10) ** (-pl_los(d3, mpf(fc)) / 10)
        gn = mpf(10) ** (-pl_nlos(d3, mpf(fc)) / 10)
        if los == "mixture":
            p = p_los(d2)
            mean = p * gl + (1 - p) * gn
        elif los == "los":
            mean = gl
        else:
            mean = gn
        vals = a + b + [beta, fc]
        out.write(",".join(f(v) for v in vals) + f",{los},{g(mean * mpf(beta))}\n")

with open("sinr.csv", "w") as out:
    out.write("noise_dbm,signal_dbm,signal_gain,interferers,sinr_db\n")
    for _ in range(1000):
        noise = rng.uniform(-110.0, -90.0)
        ps = rng.uniform(0.0, 30.0)
        gs = 10 ** rng.uniform(-12.0, -5.0)
        k = rng.randint(0, 4)
        inter = [(rng.uniform(0.0, 30.0), 10 ** rng.uniform(-14.0, -5.0)) for _ in range(k)]
        mw = lambda dbm: mpf(10) ** (mpf(dbm) / 10)
        den = mw(noise) + sum(mw(p) * mpf(gi) for p, gi in inter)
        s = 10 * log10(mw(ps) * mpf(gs) / den)
        enc = ";".join(f"{f(p)}:{f(gi)}" for p, gi in inter)
        out.write(f"{f(noise)},{f(ps)},{f(gs)},{enc},{g(s)}\n")
