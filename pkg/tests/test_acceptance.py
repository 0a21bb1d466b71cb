"""One test per acceptance criterion, each recording a PASS/FAIL line.

The lines are printed in the terminal summary of a pytest run; running this
file directly prints them too. All Monte Carlo criteria use seed 0 unless the
criterion needs several independent streams.
"""

import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy import stats

from htsl.growth import GrowthFunction, block_base, contraction_constant
from htsl.processes import (LfsmSpec, QuasiStationarySpec, block_split_margins, simulate_iid, simulate_lfsm,
                            simulate_stable_levy)
from htsl.slln import quasi_stationary_series, recursion_certificate, recursion_terms, sssi_moment_identity
from htsl.stable import Gaussian, SeedStream, StableLaw, sample_stable
from htsl.verify import decay_diagnostics, path_sup, tail_exponent

from oracles import CONSTANTS_TABLE, FCON_TOTAL, block_base_bruteforce, recursion_naive

SEED = 0


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


def test_c01_constants_table(report_criterion):
    with Timer() as t:
        errs = []
        for (p, c1), (a_ref, c_ref) in CONSTANTS_TABLE.items():
            a, c = block_base(p, c1)
            assert (a, c) == block_base_bruteforce(p, c1)
            errs.append(0 if a == a_ref else math.inf)
            errs.append(abs(c - c_ref))
            errs.append(abs(contraction_constant(p, c1, a) - c_ref))
    ok = max(errs) <= 1e-12 and t.seconds < 1
    report_criterion(1, ok, f"max |c - c_ref| = {max(errs):.1e}, {t.seconds:.2f}s")
    assert ok


def test_c02_stable_sampler(report_criterion):
    with Timer() as t:
        ks_norm = stats.kstest(sample_stable(StableLaw(2.0), SeedStream(SEED, 0), 100_000),
                               stats.norm(scale=math.sqrt(2)).cdf).statistic
        ks_cauchy = stats.kstest(sample_stable(StableLaw(1.0), SeedStream(SEED, 1), 100_000), "cauchy").statistic
        pvals = {}
        for alpha in (0.8, 1.5):
            law = StableLaw(alpha)
            x, y, z = (sample_stable(law, SeedStream(SEED, 10 + i), 100_000) for i in range(3))
            pvals[alpha] = stats.ks_2samp(x + y, 2 ** (1 / alpha) * z).pvalue
    ok = ks_norm < 0.01 and ks_cauchy < 0.01 and min(pvals.values()) > 0.01 and t.seconds < 10
    report_criterion(2, ok, f"KS normal {ks_norm:.4f}, KS Cauchy {ks_cauchy:.4f}, addition p-values "
                            f"{pvals[0.8]:.3f}/{pvals[1.5]:.3f}, {t.seconds:.1f}s")
    assert ok


def test_c03_sssi_identity(report_criterion):
    with Timer() as t:
        ens = simulate_stable_levy(2.0, 2 ** 8 + 1, 1.0, 10_000, seed=SEED)
        inc = sssi_moment_identity(ens, 0.5, 2.0, a=2, levels=8, form="increment").ratios
        incl = sssi_moment_identity(ens, 0.5, 2.0, a=2, levels=8, form="inclusive").ratios
    ok = all(0.9 <= r <= 1.1 for r in inc + incl) and t.seconds < 30
    report_criterion(3, ok, f"r_n in [{min(inc):.3f}, {max(inc):.3f}] (increment form), "
                            f"[{min(incl):.3f}, {max(incl):.3f}] (inclusive form), {t.seconds:.1f}s")
    assert ok


@pytest.mark.slow
def test_c04_log_factor_pair(report_criterion):
    with Timer() as t:
        ens = simulate_iid(Gaussian(), 2 * 2 ** 20 + 1, 1000, seed=SEED, lazy=True)
        pos, neg = decay_diagnostics(ens, [GrowthFunction.sqrt_log(0.5), GrowthFunction.power(0.5)], a=2, levels=20)
    ok = pos.decay_score >= 0.9 and 0.35 <= neg.decay_score <= 0.65 and t.seconds < 120
    report_criterion(4, ok, f"decay score {pos.decay_score:.3f} with log factor, {neg.decay_score:.3f} "
                            f"for sqrt(x), {t.seconds:.0f}s")
    assert ok


def test_c05_lfsm(report_criterion):
    with Timer() as t:
        identical = all(
            np.array_equal(simulate_lfsm(LfsmSpec(a, 1 / a, mesh=4), 64, 50, seed=SEED).values,
                           simulate_stable_levy(a, 64, 1.0, 50, seed=SEED).values)
            for a in (1.2, 1.5, 2.0))
        ens = simulate_lfsm(LfsmSpec(2.0, 0.7, mesh=8), 32, 10_000, seed=SEED)
        ts = np.arange(1, 33)
        slope = stats.linregress(np.log(ts), np.log(ens.values[:, ts].var(axis=0))).slope
    ok = identical and abs(slope - 1.4) <= 0.05 and t.seconds < 120
    report_criterion(5, ok, f"pass-through bit-identical: {identical}, variance slope {slope:.3f}, "
                            f"{t.seconds:.1f}s")
    assert ok


def test_c06_tail_exponent(report_criterion):
    with Timer() as t:
        ens = simulate_stable_levy(1.2, 256, 1 / 256, 10_000, seed=SEED, lazy=True)
        fit = tail_exponent(path_sup(ens))
    ok = abs(fit.slope + 1.2) <= 0.15 and t.seconds < 120
    report_criterion(6, ok, f"slope {fit.slope:.3f} (stderr {fit.stderr:.3f}), {t.seconds:.1f}s")
    assert ok


def test_c07_quasi_stationary(report_criterion):
    with Timer() as t:
        rep = quasi_stationary_series(QuasiStationarySpec.geometric(0.5), GrowthFunction.power(1.0), a=2, m_max=40)
    d_err = abs(rep.D - 2.0)
    f_err = abs(rep.weighted_sum_partial - FCON_TOTAL)
    ok = d_err <= 1e-9 and rep.D_tail_bound <= 1e-9 and f_err <= 1e-8 and t.seconds < 1
    report_criterion(7, ok, f"|D - 2| = {d_err:.1e} (tail {rep.D_tail_bound:.1e}), "
                            f"|sum f h - closed form| = {f_err:.1e}, {t.seconds:.3f}s")
    assert ok


def test_c08_recursion(report_criterion):
    phi = GrowthFunction(1.0, 1.0)
    with Timer() as t:
        measured = []
        for s in range(3):
            ens = simulate_iid(Gaussian(), 3 * 2 ** 10 + 1, 40, seed=SEED + s)
            measured.append(recursion_terms(ens, 2.0, phi, a=2, levels=10))
        seqs = [m.terms for m in measured] + [sum((m.terms for m in measured), [])]
        worst = 0.0
        for terms in seqs:
            for N in range(1, len(terms) + 1):
                f0 = measured[0].maximal_excess[0]
                fast = recursion_certificate(terms[:N], 0.75, f0).bounds
                worst = max(worst, max(abs(a - b) for a, b in zip(fast, recursion_naive(terms[:N], 0.75, f0))))
    ok = worst <= 1e-12 and max(len(s) for s in seqs) == 30
    report_criterion(8, ok, f"max |fast - naive| = {worst:.1e} over N <= 30, {t.seconds:.2f}s "
                            "(inputs: measured G_n, 3 ensembles x 10 levels)")
    assert ok


def test_c09_splitting(report_criterion):
    with Timer() as t:
        rng = np.random.default_rng(SEED)
        xi = np.concatenate([rng.standard_normal((5000, 64)), rng.standard_cauchy((5000, 64))])
        worst, cases = math.inf, 0
        for j in range(6):
            n = 2 ** j - 1  # blocks of 2^j terms
            m = block_split_margins(xi, n)
            scale = 1 + np.abs(xi).sum(axis=1, keepdims=True)
            worst = min(worst, float((m / scale).min()))
            cases += m.size
    ok = worst >= -1e-12 and t.seconds < 5
    report_criterion(9, ok, f"{cases} (vector, k, n) cases, min scaled margin {worst:.1e}, {t.seconds:.2f}s")
    assert ok


BATTERIES = {
    "simulate.toml": ("simulate", 'family = "levy"\nalpha = 1.5\nmesh = 4\nn = 32\npaths = 20\nseed = 3\n',
                      ["ens.csv", "ens.bin"]),
    "constants.toml": ("constants", 'p_list = [2.0, 1.0, 0.5]\nc1 = 2.0\n', ["constants.csv", "constants.json"]),
    "check.toml": ("check", 'family = "iid-normal"\nphi = "sqrt-log"\neps = 0.5\nlevels = 10\npaths = 400\n'
                            'seed = 1\n', ["check.json"]),
    "qs.toml": ("check", 'mode = "quasi-stationary"\nfamily = "ma-geometric"\nrho = 0.5\nphi = "power"\nq = 1.0\n',
                ["qs.json"]),
    "decay.toml": ("verify", 'battery = "decay"\nfamily = "iid-stable"\nalpha = 1.6\nphi = "power-log"\n'
                             'q = 0.625\nbeta = 1.5\nlevels = 10\npaths = 300\nseed = 2\n', ["decay.json"]),
    "bridge.toml": ("verify", 'battery = "bridge"\nfamily = "levy"\nalpha = 2.0\nmesh = 64\nphi = "power-log"\n'
                              'q = 0.5\nbeta = 1.0\nlevels = 6\npaths = 50\nseed = 4\n', ["bridge.json"]),
    "tail.toml": ("verify", 'battery = "tail"\nfamily = "levy"\nalpha = 1.2\nmesh = 256\npaths = 2000\n',
                  ["tail.json"]),
    "budget.toml": ("verify", 'battery = "budget"\nconstant = 1.0\nexponent = 1.5\nlevels = 50\n', ["budget.json"]),
    "lfsm.toml": ("lfsm-demo", 'alpha = 1.5\nhurst = 0.8\nmesh = 4\nlevels = 6\npaths = 100\nseed = 5\n',
                  ["lfsm.json"]),
}


@pytest.mark.slow
def test_c10_cli_determinism(report_criterion, tmp_path):
    with Timer() as t:
        mismatched = []
        for cfg_name, (cmd, body, outputs) in BATTERIES.items():
            cfg = tmp_path / cfg_name
            cfg.write_text(body)
            runs = []
            for rep in range(2):
                blobs = []
                for out in outputs:
                    target = tmp_path / f"r{rep}_{out}"
                    extra = ["--csv", str(target) + ".tidy.csv"] if cmd == "verify" and "budget" not in cfg_name \
                        and "tail" not in cfg_name else []
                    proc = subprocess.run([sys.executable, "-m", "htsl", cmd, "--config", str(cfg),
                                           "--out", str(target)] + extra, capture_output=True, text=True)
                    assert proc.returncode == 0, proc.stderr
                    blobs.append(target.read_bytes())
                    if extra:
                        blobs.append((tmp_path / (str(target.name) + ".tidy.csv")).read_bytes())
                runs.append(blobs)
            if runs[0] != runs[1]:
                mismatched.append(cfg_name)
            for blob in runs[0]:
                assert blob
        cert = json.loads((tmp_path / "r0_check.json").read_text())
    ok = not mismatched and cert["verdict"] == "satisfied" and t.seconds < 300
    report_criterion(10, ok, f"{len(BATTERIES)} batteries rerun, byte-identical: {not mismatched} "
                             f"{mismatched or ''}, {t.seconds:.0f}s")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
