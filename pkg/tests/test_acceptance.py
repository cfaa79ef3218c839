"""
Exit criteria. Each test records a one-line verdict that is printed in the
pytest terminal summary (see conftest.py).
"""

import itertools
import json
import time

import numpy as np
import pytest

from gausskld import GaussianPair, assemble_hessian, assemble_jacobian, duplication_matrix, kld_value, vec, vech
from gausskld.cli import main
from gausskld.kld import BLOCK_ORDER, Basis
from gausskld.oracle import (
    PackedPoint,
    fd_gradient,
    fd_hessian,
    identity_suite,
    instance_rng,
    mc_kld,
    random_pair,
    random_spd,
    random_symmetric,
)

from .conftest import record_criterion

SEED = 2024
DIMS = (1, 2, 3, 5, 8)
PER_DIM = 50


def instances():
    return [random_pair(instance_rng(SEED, n, k), n) for n in DIMS for k in range(PER_DIM)]


@pytest.fixture(scope="module")
def pairs():
    return instances()


def test_1_jacobian_matches_fd(pairs):
    start = time.perf_counter()
    worst = 0.0
    for p in pairs:
        J = assemble_jacobian(p, Basis.VEC).assembled
        g = fd_gradient(PackedPoint.from_pair(p, Basis.VEC))
        worst = max(worst, np.max(np.abs(J - g)) / max(1.0, np.max(np.abs(J))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-6 and elapsed <= 10.0
    record_criterion(1, "Jacobian (vec) vs central FD", ok, f"worst rel err {worst:.2e} <= 1e-6, {elapsed:.1f}s <= 10s")
    assert worst <= 1e-6
    assert elapsed <= 10.0


def test_2_vech_hessian_matches_fd(pairs):
    start = time.perf_counter()
    worst = 0.0
    for p in pairs:
        H = assemble_hessian(p, Basis.VECH).assembled
        H_fd = fd_hessian(PackedPoint.from_pair(p, Basis.VECH))
        worst = max(worst, np.max(np.abs(H - H_fd)) / max(1.0, np.max(np.abs(H))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-4 and elapsed <= 60.0
    record_criterion(2, "Hessian (vech) vs FD", ok, f"worst rel err {worst:.2e} <= 1e-4, {elapsed:.1f}s <= 60s")
    assert worst <= 1e-4
    assert elapsed <= 60.0


def test_3_symmetry_and_transpose_pairing(pairs):
    worst_sym = worst_pair = 0.0
    for p, basis in itertools.product(pairs, Basis):
        H = assemble_hessian(p, basis)
        scale = max(1.0, np.linalg.norm(H.assembled, np.inf))
        worst_sym = max(worst_sym, H.symmetry_residual / scale)
        for r, c in itertools.product(BLOCK_ORDER, repeat=2):
            worst_pair = max(worst_pair, np.max(np.abs(H.blocks[r, c].T - H.blocks[c, r])) / scale)
    ok = worst_sym <= 1e-12 and worst_pair <= 1e-12
    record_criterion(3, "Hessian symmetry + 16 transpose pairings", ok, f"sym {worst_sym:.1e}, pairing {worst_pair:.1e} <= 1e-12")
    assert ok


def test_4_stationary_point():
    worst_grad = worst_eig = 0.0
    for n in (1, 2, 3, 5):
        for k in range(20):
            rng = instance_rng(SEED, 100 + n, k)
            m, S = rng.standard_normal(n), random_spd(rng, n)
            p = GaussianPair(m, m.copy(), S, S.copy())
            scale = max(1.0, np.linalg.norm(p.V_inv, np.inf) ** 2)
            for basis in Basis:
                worst_grad = max(worst_grad, np.linalg.norm(assemble_jacobian(p, basis).assembled) / scale)
            lam = np.linalg.eigvalsh(assemble_hessian(p, Basis.VECH).assembled)
            worst_eig = max(worst_eig, -lam.min() / np.abs(lam).max())
    ok = worst_grad <= 1e-12 and worst_eig <= 1e-10
    record_criterion(4, "stationarity and PSD at q = p", ok, f"|J|/scale {worst_grad:.1e} <= 1e-12, -min eig/|H|_2 {worst_eig:.1e} <= 1e-10")
    assert ok


def test_5_identity_suite():
    reports = identity_suite(seed=42, dims=[1, 2, 3, 5], trials=200, tol=1e-10)
    failed = [r.name for r in reports if not r.passed]
    algebraic = [r for r in reports if r.tolerance == 1e-10]
    controls = [r for r in reports if r.name.startswith("control_ss_block_vec_fd_mismatch") and "[n=1]" not in r.name]
    vech_fd = [r for r in reports if r.name.startswith("ss_block_vech_matches_fd")]
    ok = not failed and len(controls) == 3 and all(r.passed for r in vech_fd)
    worst = max(r.observed_error for r in algebraic)
    record_criterion(
        5, "identity suite + (S,S) negative control", ok, f"{len(reports)} reports, worst algebraic {worst:.1e} <= 1e-10, failed={failed}"
    )
    assert not failed
    assert len(algebraic) == 4 * 15
    assert len(controls) == 3
    # the control really observed a mismatch in every trial
    assert all(r.observed_error == 0.0 for r in controls)


def test_6_duplication_exact():
    bad = 0
    for n in range(1, 9):
        D = duplication_matrix(n)
        rng = np.random.default_rng([SEED, 6, n])
        for _ in range(100):
            A = random_symmetric(rng, n)
            bad += not np.array_equal(D @ vech(A), vec(A))
    record_criterion(6, "duplication matrix exact", bad == 0, f"{bad} inexact of 800")
    assert bad == 0


def test_7_monte_carlo_value():
    misses = []
    for n in (1, 2, 3):
        for k in range(10):
            p = random_pair(instance_rng(SEED, 700 + n, k), n)
            est, se = mc_kld(p, samples=1_000_000, seed=SEED + 10 * n + k)
            exact = kld_value(p)
            if abs(est - exact) > 3 * se:
                misses.append((n, k, (est - exact) / se))
    scalar = GaussianPair([0.0], [0.0], [[1.0]], [[2.0]])
    est, se = mc_kld(scalar, samples=1_000_000, seed=SEED)
    scalar_ok = abs(kld_value(scalar) - 0.096573590) <= 5e-10 and abs(est - 0.096573590) <= 3 * se
    ok = not misses and scalar_ok
    record_criterion(7, "KLD value vs Monte Carlo (1e6 samples)", ok, f"misses beyond 3 SE: {misses}; scalar case ok={scalar_ok}")
    assert not misses
    assert scalar_ok


def _run(argv, capsys):
    code = main([str(a) for a in argv])
    out, _ = capsys.readouterr()
    return code, out


def test_8_cli_contract(fixtures_dir, capsys):
    valid, same, bad, nonspd = (fixtures_dir / f for f in ("valid.json", "identical.json", "malformed.json", "non_spd.json"))
    problems = []
    expectations = [
        (["kld", valid], 0),
        (["kld", same], 0),
        (["kld", bad], 2),
        (["kld", nonspd], 3),
        (["jacobian", valid, "--block", "all"], 0),
        (["jacobian", bad], 2),
        (["jacobian", nonspd], 3),
        (["hessian", valid, "--basis", "vec"], 0),
        (["hessian", bad], 2),
        (["hessian", nonspd], 3),
        (["check", valid], 0),
        (["check", same], 0),
        (["check", bad], 2),
        (["check", nonspd], 3),
        (["check", "--random", 2, "--seed", 1, "--trials", 2, "--tol-grad", "1e-15"], 1),
        (["identities", "--seed", 42, "--dims", "1,2", "--trials", 20], 0),
        (["identities", "--dims", "x"], 2),
    ]
    for argv, expected in expectations:
        code, _ = _run(argv, capsys)
        if code != expected:
            problems.append(f"{argv[0]} {argv[1:]} -> {code}, expected {expected}")
    for argv in (["kld", valid], ["jacobian", valid], ["hessian", valid], ["check", valid], ["identities", "--trials", 5, "--dims", "1,2"]):
        first, second = _run(argv, capsys)[1], _run(argv, capsys)[1]
        if first != second:
            problems.append(f"{argv[0]} output not deterministic")
    _, out = _run(["kld", same], capsys)
    if abs(json.loads(out)["payload"]["value"]) > 1e-15:
        problems.append("q = p value not 0")
    record_criterion(8, "CLI exit codes and determinism", not problems, "; ".join(problems) or "all subcommands conform")
    assert not problems
