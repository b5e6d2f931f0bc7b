"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Criteria 1-6 run entirely on the synthetic oracle. Criterion 7 (and the
fixture artifact check) run only when the trained model fixture exists at
fixtures/; they skip cleanly otherwise.
"""

import json
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

from psyprobe.campaign import config_from_dict, run
from psyprobe.deepception import AttackConfig, attack, fooling_campaign, select_decoy
from psyprobe.image import (
    Grid,
    Rect,
    apply_decoy,
    crop,
    insert_patch,
    make_black_canvas,
    make_decoy,
    save_png,
)
from psyprobe.oracle import (
    LocalOracle,
    hotspot_synthetic_spec,
    random_synthetic_spec,
    uniform_synthetic_spec,
)
from psyprobe.probing import (
    extract_best_patch,
    fit_to_oracle,
    greedy_cumulative,
    spatial_map,
    spatial_stats,
)

from helpers import (
    binary_patch_image,
    brightness_tradeoff_spec,
    channel_blind_spec,
    gray_image,
    make_patch,
    naive_probabilities,
    noise_decoy_matched_std,
    oracle_of,
    structure_sensitive_spec,
)

REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURE_DIR = REPO_ROOT / "fixtures"
FIXTURE_MODEL = FIXTURE_DIR / "model.onnx"
FIXTURE_MANIFEST = FIXTURE_DIR / "manifest.json"


@contextmanager
def criterion(number: int, description: str, limit_s: float):
    start = time.monotonic()
    try:
        yield
    except BaseException:
        print(f"[criterion {number}] FAIL: {description}")
        raise
    elapsed = time.monotonic() - start
    assert elapsed < limit_s, f"criterion {number} took {elapsed:.1f}s (limit {limit_s}s)"
    print(f"[criterion {number}] PASS ({elapsed:.1f}s): {description}")


def test_criterion_1_pixel_arithmetic_exactness():
    with criterion(1, "1000 insert/crop round-trips bit-exact; decoy diffs "
                      "confined with L-inf <= 1/tau", limit_s=10.0):
        rng = np.random.default_rng(1001)
        for _ in range(1000):
            channels = int(rng.choice([1, 3]))
            cw = int(rng.integers(8, 64))
            ch = int(rng.integers(8, 64))
            pw = int(rng.integers(1, cw + 1))
            ph = int(rng.integers(1, ch + 1))
            pos = Rect(int(rng.integers(0, cw - pw + 1)),
                       int(rng.integers(0, ch - ph + 1)), pw, ph)
            patch = rng.random((ph, pw, channels), dtype=np.float32)
            canvas = make_black_canvas(cw, ch, channels)
            assert np.array_equal(crop(insert_patch(canvas, patch, pos), pos), patch)

        for tau in (1.0, 2.0, 4.0, 8.0):
            for _ in range(100):
                channels = int(rng.choice([1, 3]))
                target = rng.random((32, 32, channels), dtype=np.float32)
                decoy = make_decoy(rng.random((8, 8, 1), dtype=np.float32), tau)
                cell = Rect(int(rng.integers(0, 25)), int(rng.integers(0, 25)), 8, 8)
                out = apply_decoy(target, decoy, cell)
                diff = np.abs(out.astype(np.float64) - target.astype(np.float64))
                assert diff.max() <= 1.0 / tau + 1e-12
                changed = np.argwhere(out != target)
                assert len({int(k) for _, _, k in changed}) <= 1
                for i, j, _ in changed:
                    assert cell.y <= i < cell.y + cell.h
                    assert cell.x <= j < cell.x + cell.w


def test_criterion_2_spatial_property():
    with criterion(2, "hotspot argmax at planted cell, map values within 1e-9 "
                      "of naive reference, uniform ratio exactly 1", limit_s=30.0):
        rng = np.random.default_rng(1002)
        pattern = rng.uniform(0.3, 1.0, size=(8, 8, 1)).astype(np.float32)
        hot_cell = Rect(16, 8, 8, 8)
        # temperature sized to the 32x32 score range; keeps softmax off
        # saturation so placements stay strictly ordered
        spec = hotspot_synthetic_spec(32, 32, 1, ["A", "B"], "A", hot_cell, pattern,
                                      temperature=64.0)
        oracle = oracle_of(spec)
        patch = make_patch(pattern, class_id="A")
        pmap = spatial_map(patch, (32, 32), 8, oracle)
        assert len(pmap.positions) == 16
        stats = spatial_stats(pmap)
        assert stats.argmax == hot_cell
        for pos, value in zip(pmap.positions, pmap.values):
            img = insert_patch(make_black_canvas(32, 32, 1), pattern, pos)
            ref = naive_probabilities(spec, img)["A"]
            assert abs(value - ref) <= 1e-9

        uniform = oracle_of(uniform_synthetic_spec(32, 32, 1, ["A", "B"]))
        umap = spatial_map(patch, (32, 32), 8, uniform)
        ustats = spatial_stats(umap)
        assert ustats.ratio == 1.0
        assert all(v == umap.values[0] for v in umap.values)


def test_criterion_3_cumulative_activation_inhibition():
    with criterion(3, "50 randomized instances: monotone traces, gain bounds, "
                      "every greedy step exhaustively locally optimal", limit_s=120.0):
        multi_step = 0
        for instance in range(50):
            spec = random_synthetic_spec(16, 16, 1, ["A", "B", "C"],
                                         seed=2000 + instance, temperature=10.0,
                                         negative_weights=(instance % 2 == 1))
            oracle = oracle_of(spec)
            rng = np.random.default_rng(3000 + instance)
            pattern = rng.random((4, 4, 1), dtype=np.float32)
            patch = make_patch(pattern, class_id="A")
            for mode in ("activation", "inhibition"):
                trace = greedy_cumulative(patch, mode, (16, 16), oracle)
                probs = [p for _, p in trace.steps]
                assert len(trace.steps) <= 16
                if mode == "activation":
                    assert all(b > a for a, b in zip(probs, probs[1:]))
                    assert trace.gain >= 1.0
                else:
                    assert all(b < a for a, b in zip(probs, probs[1:]))
                    assert trace.gain <= 1.0
                if len(trace.steps) >= 2:
                    multi_step += 1

                # exhaustive local-optimality re-check of every step; the
                # first placement is the single-placement argmax in BOTH
                # modes (it defines the initial probability)
                cells = trace.grid.cells()
                current = make_black_canvas(16, 16, 1)
                placed = set()
                for step, (cell, prob) in enumerate(trace.steps):
                    alternatives = {
                        i: oracle.probability_of(insert_patch(current, pattern, c), "A")
                        for i, c in enumerate(cells) if i not in placed
                    }
                    if step == 0 or mode == "activation":
                        best = max(alternatives.values())
                    else:
                        best = min(alternatives.values())
                    assert prob == best
                    idx = trace.grid.index_of(cell)
                    assert alternatives[idx] == prob
                    placed.add(idx)
                    current = insert_patch(current, pattern, cell)
        assert multi_step >= 20  # the instance pool genuinely exercises repetition


def test_criterion_4_deepception_soundness():
    with criterion(4, "20 provably-foolable targets -> 100%, 20 unfoolable -> 0% "
                      "clean exhaustion, verdicts re-confirmed, monotone curve",
                   limit_s=120.0):
        decoy = make_decoy(binary_patch_image(4, 0.5, seed=9), 4.0,
                           source_patch_id="attack-decoy")
        cfg = AttackConfig(tau=4.0)

        foolable_oracle = oracle_of(brightness_tradeoff_spec(16, 0.51, 1.0, 1.0))
        targets = [gray_image(16) for _ in range(20)]
        cells = Grid(4, 4, 4, 4).cells()
        for target in targets:
            flips = 0
            for cell in cells:  # exhaustive single-placement foolability proof
                vec = foolable_oracle.classify(apply_decoy(target, decoy, cell))
                if vec.entries["bright"] > vec.entries["target"]:
                    flips += 1
            assert flips > 0
        report = fooling_campaign(targets, decoy, cfg, foolable_oracle)
        assert report.fooling_ratio == 1.0
        for target, row in zip(targets, report.rows):
            res = attack(target, decoy, cfg, foolable_oracle)
            assert res.fooled and row.fooled
            confirm = foolable_oracle.classify(res.perturbed_image)
            assert confirm.top1() != "target"

        blind_oracle = oracle_of(channel_blind_spec(16))
        unfoolable = [gray_image(16, channels=3) for _ in range(20)]
        blind_report = fooling_campaign(unfoolable, decoy, cfg, blind_oracle)
        assert blind_report.fooling_ratio == 0.0
        for target in unfoolable[:5]:
            res = attack(target, decoy, cfg, blind_oracle)
            assert not res.fooled
            assert not res.budget_exhausted  # clean exhaustion, not a budget stop
            assert res.decoys_used == 0
            assert np.array_equal(res.perturbed_image, target)

        for rep in (report, blind_report):
            curve = rep.fooled_vs_decoy_budget
            assert all(b >= a for a, b in zip(curve, curve[1:]))
            assert curve[-1] == rep.fooled_count


def test_criterion_5_baseline_separation():
    with criterion(5, "structured decoy fools strictly more than equal-std "
                      "gaussian decoys on a template-sensitive oracle",
                   limit_s=120.0):
        tau = 4.0
        pattern = binary_patch_image(8, 0.1, seed=7)
        spec = structure_sensitive_spec(32, pattern, tau)
        pool = [
            make_patch(pattern, class_id="target", probability=0.9, image_id="tex"),
            make_patch(gray_image(8, 0.7), class_id="target", probability=1.0,
                       image_id="flat"),  # std 0: never outranks the pattern
        ]
        structured = select_decoy(pool, tau)
        assert structured.source_patch_id == pool[0].patch_id

        images = [gray_image(32) for _ in range(20)]
        cfg = AttackConfig(tau=tau)
        structured_report = fooling_campaign(images, structured, cfg, oracle_of(spec))
        for seed in (11, 12):
            noise = noise_decoy_matched_std(8, seed, structured.std, tau)
            assert noise is not None
            assert abs(noise.std - structured.std) / structured.std < 0.02
            noise_report = fooling_campaign(images, noise, cfg, oracle_of(spec))
            assert structured_report.fooled_count > noise_report.fooled_count
        assert structured_report.fooled_count == 20


def test_criterion_6_reproducibility(tmp_path):
    with criterion(6, "identical config + seed -> byte-identical CSV/JSON/SVG",
                   limit_s=120.0):
        inputs = tmp_path / "inputs"
        inputs.mkdir()
        rng = np.random.default_rng(1006)
        for i in range(5):
            img = np.clip(rng.random((16, 16, 1), dtype=np.float32), 0, 1)
            save_png(img, inputs / f"img{i:03d}.png")
        patch = make_patch(binary_patch_image(4, 0.5, seed=10), class_id="alpha",
                           probability=0.8)
        from psyprobe.probing import save_patch

        save_patch(patch, tmp_path / "patch.png")

        def config(kind, params, out_name):
            return config_from_dict({
                "schema_version": 1,
                "seed": 0,
                "budget": None,
                "jobs": 1,
                "oracle": {"kind": "synthetic",
                           "params": {"preset": "random", "canvas": [16, 16, 1],
                                      "classes": ["alpha", "beta"],
                                      "temperature": 5.0, "spec_seed": 6}},
                "experiment": {"kind": kind, "params": params},
                "io": {"input_dir": str(inputs), "out_dir": str(tmp_path / out_name)},
            })

        campaigns = [
            config("spatial-map", {"patch": str(tmp_path / "patch.png"),
                                   "stride": 4}, "out_map"),
            config("attack", {"patches": [str(tmp_path / "patch.png")],
                              "tau": 4.0, "n_images": 3}, "out_attack"),
            config("study-decoys", {"patches": [str(tmp_path / "patch.png")],
                                    "n_images": 2, "noise_stds": [100.0]},
                   "out_study"),
        ]
        covered = set()
        for cfg in campaigns:
            out_dir = Path(cfg.out_dir)
            run(cfg)
            first = {p.name: p.read_bytes() for p in out_dir.iterdir()}
            run(cfg)
            second = {p.name: p.read_bytes() for p in out_dir.iterdir()}
            assert sorted(first) == sorted(second)
            mismatched = [
                name for name, blob in first.items()
                if name != "run_manifest.json" and second[name] != blob
            ]
            assert not mismatched, mismatched
            covered |= {Path(n).suffix for n in first}
        assert {".csv", ".svg", ".json"} <= covered


fixture_missing = not (FIXTURE_MODEL.exists() and FIXTURE_MANIFEST.exists())


@pytest.mark.skipif(fixture_missing, reason="model fixture not generated")
def test_criterion_7_fixture_model_integration():
    with criterion(7, "trained fixture: >=1 of 10 attacks fools top-1 at tau=4 "
                      "and >=1 patch has spatial ratio > 1", limit_s=300.0):
        oracle = LocalOracle(FIXTURE_MODEL, FIXTURE_MANIFEST)
        in_h, in_w, in_c = oracle.input_size
        rng = np.random.default_rng(1007)

        def textured_image():
            base = rng.random((in_h // 4, in_w // 4, in_c)).astype(np.float32)
            img = np.repeat(np.repeat(base, 4, axis=0), 4, axis=1)
            return np.clip(img, 0.0, 1.0)

        sources = [textured_image() for _ in range(4)]
        classes = sorted(oracle.classify(sources[0]).entries)
        pool = [
            extract_best_patch(sources, cls, [in_w // 4, in_w // 2], oracle)
            for cls in classes[:4]
        ]

        ratios = []
        for patch in pool:
            pmap = spatial_map(patch, (in_w, in_h), patch.image.shape[1], oracle)
            ratios.append(spatial_stats(pmap).ratio)
        assert any(r > 1.0 for r in ratios)

        decoy = select_decoy(pool, 4.0)
        cfg = AttackConfig(tau=4.0)
        targets = [textured_image() for _ in range(10)]
        report = fooling_campaign(targets, decoy, cfg, oracle)
        assert report.fooled_count >= 1
        for row, target in zip(report.rows, targets):
            if row.fooled:
                res = attack(target, decoy, cfg, oracle)
                confirm = oracle.classify(res.perturbed_image)
                assert confirm.top1() != oracle.classify(target).top1()
                break


@pytest.mark.skipif(fixture_missing, reason="model fixture not generated")
def test_criterion_8_fixture_artifacts():
    with criterion(8, "fixture model < 5 MB, holdout accuracy >= 0.80, manifest "
                      "loads through the local backend", limit_s=60.0):
        assert FIXTURE_MODEL.stat().st_size < 5 * 1024 * 1024
        oracle = LocalOracle(FIXTURE_MODEL, FIXTURE_MANIFEST)
        in_h, in_w, in_c = oracle.input_size
        vec = oracle.classify(np.full((in_h, in_w, in_c), 0.5, dtype=np.float32))
        assert abs(sum(vec.entries.values()) - 1.0) <= 1e-6
        accuracy_report = FIXTURE_DIR / "accuracy.json"
        assert accuracy_report.exists()
        payload = json.loads(accuracy_report.read_text())
        assert payload["holdout_accuracy"] >= 0.80
