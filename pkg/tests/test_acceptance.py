"""Acceptance checks for the package as a whole.

Each test prints one "criterion N: PASS/FAIL" line directly to the terminal
(bypassing capture) and then asserts, so a full run both narrates the
scorecard and enforces it. The expensive shared artifacts (the pinned trend
run and the informed sweep) come from session fixtures in conftest.py.
"""

import math
import time

import numpy as np
import pytest

from ditherdefense.attacks import (
    AttackConfig,
    SiaParams,
    SteConfig,
    mifgsm,
    pgd,
    sia,
)
from ditherdefense.dither import QuantSpec, fs_dither, quantize_uniform
from ditherdefense.filters import BlurSpec, gaussian_blur
from ditherdefense.sweep import informed_worst_case
from ditherdefense.tinymodel import (
    CrossEntropyLoss,
    MarginLoss,
    NegCosineLoss,
    forward,
    init_model,
    loss_and_input_gradient,
)
from oracles import blur_2d_direct, central_difference_gradient, fs_dither_scalar


@pytest.fixture
def announce(capsys):
    def _announce(number, ok, detail):
        with capsys.disabled():
            verdict = "PASS" if ok else "FAIL"
            print(f"criterion {number}: {verdict} ({detail})")

    return _announce


def test_criterion_01_outputs_lie_on_the_level_grid(announce):
    levels = (2, 3, 5, 8, 20)
    rng = np.random.default_rng(100)
    # One tiny call first so jit compilation stays outside the timed loop.
    fs_dither(np.full((2, 2, 1), 0.5), QuantSpec(2))
    bad = 0
    start = time.perf_counter()
    for i in range(1000):
        spec = QuantSpec(levels[i % len(levels)])
        h = int(rng.integers(1, 13))
        w = int(rng.integers(1, 13))
        img = rng.uniform(0.0, 1.0, (h, w, 3 if i % 2 else 1))
        for out in (fs_dither(img, spec), quantize_uniform(img, spec)):
            if not np.all(np.isin(out, spec.grid)):
                bad += 1
    elapsed = time.perf_counter() - start
    ok = bad == 0 and elapsed < 5.0
    announce(1, ok, f"1000 images over K in {levels}, {bad} off-grid, {elapsed:.2f}s")
    assert ok, f"{bad} off-grid outputs, {elapsed:.2f}s"


HAND_TRACED = [
    # (pixels, scan, expected binary output)
    ([[0.5, 0.5]], "raster", [[1.0, 0.0]]),
    (
        [[0.5] * 4 for _ in range(4)],
        "raster",
        [[1.0, 0.0, 1.0, 0.0],
         [0.0, 1.0, 0.0, 1.0],
         [1.0, 0.0, 1.0, 0.0],
         [0.0, 1.0, 0.0, 1.0]],
    ),
    (
        [[(r * 4 + c) / 15.0 for c in range(4)] for r in range(4)],
        "raster",
        [[0.0, 0.0, 0.0, 0.0],
         [0.0, 1.0, 0.0, 1.0],
         [1.0, 0.0, 1.0, 1.0],
         [1.0, 1.0, 1.0, 1.0]],
    ),
    (
        [[0.625, 0.75, 0.125, 0.75],
         [0.5, 0.5, 0.625, 0.375],
         [0.875, 0.125, 0.25, 0.375],
         [0.5, 0.375, 0.125, 0.125]],
        "raster",
        [[1.0, 1.0, 0.0, 1.0],
         [0.0, 0.0, 1.0, 0.0],
         [1.0, 0.0, 0.0, 1.0],
         [1.0, 0.0, 0.0, 0.0]],
    ),
    (
        [[0.625, 0.75, 0.125, 0.75],
         [0.5, 0.5, 0.625, 0.375],
         [0.875, 0.125, 0.25, 0.375],
         [0.5, 0.375, 0.125, 0.125]],
        "serpentine",
        [[1.0, 1.0, 0.0, 1.0],
         [0.0, 0.0, 1.0, 0.0],
         [1.0, 0.0, 0.0, 1.0],
         [0.0, 1.0, 0.0, 0.0]],
    ),
]


def test_criterion_02_hand_traced_fixtures(announce):
    ok = True
    for pixels, scan, expected in HAND_TRACED:
        out = fs_dither(np.asarray(pixels)[:, :, np.newaxis], QuantSpec(2), scan=scan)
        ok = ok and bool(np.array_equal(out[:, :, 0], np.asarray(expected)))
        ok = ok and fs_dither_scalar(pixels, 2, scan=scan) == expected
    announce(2, ok, "1x2 seed case plus four 4x4 fixtures, bit exact both routes")
    assert ok


def test_criterion_03_gradient_checks(announce):
    rng = np.random.default_rng(101)
    worst = 0.0
    start = time.perf_counter()
    for trial in range(50):
        model = init_model(height=6, width=5, channels=3, hidden=12,
                           classes=4, seed=trial)
        img = rng.uniform(0.05, 0.95, (6, 5, 3))
        kind = trial % 3
        if kind == 0:
            loss = CrossEntropyLoss(int(rng.integers(0, 4)))
        elif kind == 1:
            loss = MarginLoss(int(rng.integers(0, 4)))
        else:
            other = rng.uniform(0.05, 0.95, (6, 5, 3))
            reference = forward(model, other)[0] + rng.normal(0.0, 0.1, 12)
            loss = NegCosineLoss(reference=reference)
        _, grad = loss_and_input_gradient(model, img, loss)

        def scalar(x, model=model, loss=loss):
            return loss_and_input_gradient(model, x, loss)[0]

        fd = central_difference_gradient(scalar, img)
        denom = max(float(np.linalg.norm(fd)), 1e-12)
        worst = max(worst, float(np.linalg.norm(grad - fd)) / denom)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-4 and elapsed < 10.0
    announce(3, ok, f"50 triples, worst relative error {worst:.2e}, {elapsed:.2f}s")
    assert ok, f"worst rel err {worst:.2e}, {elapsed:.2f}s"


def test_criterion_04_zero_pq_informed_equals_oblivious(announce):
    model = init_model(height=16, width=16, channels=3, hidden=24,
                       classes=4, seed=40)
    rng = np.random.default_rng(41)
    ok = True
    for family, func in (("pgd", pgd), ("mifgsm", mifgsm), ("sia", sia)):
        for trial in range(3):
            img = rng.uniform(0.0, 1.0, (16, 16, 3))
            cfg = AttackConfig(family=family, epsilon=8 / 255, steps=6,
                               seed=trial)
            loss = CrossEntropyLoss(trial % 4)
            plain = func(model, img, loss, cfg)
            informed = func(
                model, img, loss, cfg,
                ste=SteConfig(enabled=True, k_attack=5, p_q=0.0),
            )
            ok = ok and plain.adversarial.tobytes() == informed.adversarial.tobytes()
    announce(4, ok, "pgd/mifgsm/sia at p_q = 0 byte-identical to oblivious, 3 seeds each")
    assert ok


def test_criterion_05_budget_and_psnr_floor(announce, trend):
    model = trend["model"]
    eval_ds = trend["eval_ds"]
    eps = 3.0 / 255.0
    worst_linf = 0.0
    worst_psnr = math.inf
    count = 0
    ok = True
    for family, func in (("pgd", pgd), ("mifgsm", mifgsm), ("sia", sia)):
        for i in range(10):
            img = eval_ds.images[i]
            cfg = AttackConfig(family=family, epsilon=eps, steps=10, seed=i)
            loss = CrossEntropyLoss(int(eval_ds.labels[i]))
            res = func(model, img, loss, cfg)
            worst_linf = max(worst_linf, res.linf_norm)
            worst_psnr = min(worst_psnr, res.psnr_db)
            ok = ok and res.linf_norm <= eps + 1e-9 and res.psnr_db >= 38.58
            count += 1
    announce(
        5, ok,
        f"{count} results at 3/255: max linf {worst_linf:.6f} "
        f"(cap {eps:.6f}), min psnr {worst_psnr:.2f} dB (floor 38.58)",
    )
    assert ok, f"max linf {worst_linf}, min psnr {worst_psnr}"


def test_criterion_06_separable_blur_equals_direct(announce):
    rng = np.random.default_rng(102)
    worst = 0.0
    for trial in range(5):
        img = rng.uniform(0.0, 1.0, (8, 8, 3 if trial % 2 else 1))
        out = gaussian_blur(img, BlurSpec(sigma=3.0, size=9))
        direct = np.asarray(blur_2d_direct(img.tolist(), 9, 3.0))
        worst = max(worst, float(np.max(np.abs(out - direct))))
    const_ok = True
    for value in (0.0, 0.5, 1.0):
        img = np.full((8, 8, 3), value)
        out = gaussian_blur(img, BlurSpec(sigma=3.0, size=9))
        const_ok = const_ok and bool(np.allclose(out, value, atol=1e-12, rtol=0.0))
    ok = worst <= 1e-12 and const_ok
    announce(6, ok, f"max separable-vs-direct gap {worst:.2e}; constant images fixed")
    assert ok, f"worst gap {worst:.2e}, constants {'ok' if const_ok else 'moved'}"


def test_criterion_07_update_rule_equivalences(announce):
    rng = np.random.default_rng(71)
    img = rng.uniform(0.1, 0.9, (16, 16, 3))
    loss = CrossEntropyLoss(2)
    base = dict(epsilon=8 / 255, steps=8, seed=7)

    model = init_model(height=16, width=16, channels=3, hidden=24,
                       classes=4, seed=70)
    mi = mifgsm(model, img, loss, AttackConfig(family="mifgsm", **base))
    si = sia(
        model, img, loss,
        AttackConfig(family="sia", sia=SiaParams(transforms=("identity",)), **base),
    )
    sia_ok = mi.adversarial.tobytes() == si.adversarial.tobytes()

    linear = init_model(height=16, width=16, channels=3, hidden=24,
                        classes=4, seed=72)
    # Push every relu far into its active region so the network is affine
    # over the whole [0, 1] input box: no kinks anywhere on the attack path.
    # w2 shrinks in step so the shifted embeddings do not saturate softmax.
    linear.b1[...] = 30.0
    linear.w2[...] *= 0.01
    assert np.all(linear.w1.clip(max=0.0).sum(axis=1) + linear.b1 > 0.0)
    p = pgd(linear, img, loss, AttackConfig(family="pgd", **base))
    m0 = mifgsm(
        linear, img, loss, AttackConfig(family="mifgsm", momentum=0.0, **base)
    )
    pgd_ok = p.adversarial.tobytes() == m0.adversarial.tobytes()

    ok = sia_ok and pgd_ok
    announce(
        7, ok,
        f"identity-SIA vs mifgsm {'equal' if sia_ok else 'DIFFER'}; "
        f"mu=0 mifgsm vs pgd on kink-free model {'equal' if pgd_ok else 'DIFFER'}",
    )
    assert ok


def test_criterion_08_attack_collapses_undefended_accuracy(announce, trend):
    clean = trend["clean_accuracy"]
    attacked = trend["pgd_accuracy"]["none"]
    elapsed = trend["elapsed_s"]
    ok = clean >= 0.90 and attacked <= 0.10 and elapsed < 120.0
    announce(
        8, ok,
        f"clean {clean:.3f} (need >= 0.90), pgd {attacked:.3f} (need <= 0.10), "
        f"{elapsed:.1f}s (cap 120s)",
    )
    assert ok, f"clean {clean:.3f}, attacked {attacked:.3f}, {elapsed:.1f}s"


def test_criterion_09_coarse_dither_outlasts_fine(announce, trend):
    fs3 = trend["pgd_accuracy"]["fs3"]
    fs20 = trend["pgd_accuracy"]["fs20"]
    gap = fs3 - fs20
    ok = gap >= 0.25
    announce(
        9, ok,
        f"accuracy under pgd: fs3 {fs3:.3f}, fs20 {fs20:.3f}, "
        f"gap {gap:+.3f} (need >= 0.25)",
    )
    assert ok, (
        f"coarse-vs-fine gap is {gap:+.3f}, not 0.25: error diffusion "
        "reconstructs the attack's low-frequency logit damage at unit gain "
        "regardless of the level count, so only quantization jitter varies "
        "with K, and the measured margin deficits are an order of magnitude "
        "larger than that jitter at either level"
    )


def test_criterion_10_blur_blunts_the_informed_attacker(announce, informed_sweep):
    report = informed_sweep["report_8w"]
    values = {
        (r.defense, r.ste): r.value
        for r in report.rows if r.task == "classification"
    }
    degradation = {}
    picks = {}
    for defense in ("fs4", "fs4_blur"):
        worst, worst_id = informed_worst_case(report, defense, "sia", "classification")
        degradation[defense] = values[(defense, "oblivious")] - worst
        picks[defense] = worst_id
    elapsed = informed_sweep["elapsed_8w_s"]
    ok = degradation["fs4_blur"] < degradation["fs4"] and elapsed < 900.0
    announce(
        10, ok,
        f"informed degradation fs4 {degradation['fs4']:+.3f} (worst {picks['fs4']}), "
        f"fs4_blur {degradation['fs4_blur']:+.3f} (worst {picks['fs4_blur']}), "
        f"{elapsed:.0f}s (cap 900s)",
    )
    assert ok, f"degradation {degradation}, {elapsed:.0f}s"


def test_criterion_11_worker_count_changes_nothing(announce, informed_sweep):
    ok = informed_sweep["csv_1w"] == informed_sweep["csv_8w"]
    announce(11, ok, "sweep CSV byte-identical with 1 worker and 8 workers")
    assert ok
