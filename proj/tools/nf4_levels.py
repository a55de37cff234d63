#!/usr/bin/env python3
"""Generate the NF4 codebook with a high-precision inverse normal CDF.

Levels follow the usual QLoRA construction: 8 positive quantiles from the
upper half, 7 negative quantiles from the lower half, plus an exact zero.
Each half is normalized by its extreme quantile so the table spans [-1, 1].

The output is pasted into include/medlite/quant/nf4.hpp.
"""
import mpmath as mp

mp.mp.dps = 50
OFFSET = mp.mpf("0.9677")


def linspace(a, b, n):
    return [a + (b - a) * i / (n - 1) for i in range(n)]


def main():
    pos = [mp.sqrt(2) * mp.erfinv(2 * p - 1) for p in linspace(OFFSET, mp.mpf("0.5"), 9)[:-1]]
    neg = [-mp.sqrt(2) * mp.erfinv(2 * p - 1) for p in linspace(OFFSET, mp.mpf("0.5"), 8)[:-1]]
    pos = [v / pos[0] for v in pos]
    neg = [v / -neg[0] for v in neg]
    levels = sorted(pos + [mp.mpf(0)] + neg)
    assert len(levels) == 16
    for v in levels:
        print(f"    {mp.nstr(v, 17, min_fixed=-5, max_fixed=5, strip_zeros=False)},")


if __name__ == "__main__":
    main()
