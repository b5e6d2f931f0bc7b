"""Campaign configuration, experiment dispatch and report/manifest emission.

A campaign is one JSON config file (schema_version 1) naming an oracle, an
experiment and its parameters. Runs are reproducible: the resolved config
and its hash are embedded in every report, and identical config + seed
yields byte-identical CSV/JSON/SVG artifacts.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import deepception, probing
from .errors import ConfigError, EmptyError, InputError
from .image import Rect, flatten_to_gray, load_png, make_decoy, make_grid, save_png
from .oracle import (
    Oracle,
    OracleBudget,
    LocalOracle,
    RemoteOracle,
    SyntheticOracle,
    hotspot_synthetic_spec,
    random_synthetic_spec,
    uniform_synthetic_spec,
)
from .plotting import render_plot, spatial_heatmap_data
from .probing import fit_to_oracle, load_patch, save_patch
from .sampling import sample_images

SCHEMA_VERSION = 1

ORACLE_KINDS = ("synthetic", "local", "remote")
EXPERIMENT_KINDS = (
    "extract-patches",
    "local-curve",
    "spatial-map",
    "cumulative",
    "attack",
    "study-transparency",
    "study-decoys",
)
_NEEDS_INPUT_DIR = ("extract-patches", "attack", "study-transparency", "study-decoys")


@dataclass
class CampaignConfig:
    oracle: dict
    experiment: dict
    io: dict
    seed: int = 0
    budget: int | None = None
    jobs: int = 1
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "seed": self.seed,
            "budget": self.budget,
            "jobs": self.jobs,
            "oracle": self.oracle,
            "experiment": self.experiment,
            "io": self.io,
        }

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    @property
    def input_dir(self) -> str:
        return self.io.get("input_dir", "")

    @property
    def out_dir(self) -> str:
        return self.io.get("out_dir", "")


def validate_config(raw: dict) -> list[str]:
    """Return every violation found (empty list = valid)."""
    problems = []
    if not isinstance(raw, dict):
        return ["config root must be a JSON object"]
    if raw.get("schema_version") != SCHEMA_VERSION:
        problems.append(f"schema_version must be {SCHEMA_VERSION}")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        problems.append("seed must be a non-negative integer")
    budget = raw.get("budget")
    if budget is not None and (not isinstance(budget, int) or isinstance(budget, bool)
                               or budget <= 0):
        problems.append("budget must be null or a positive integer")
    jobs = raw.get("jobs", 1)
    if not isinstance(jobs, int) or isinstance(jobs, bool) or jobs < 1:
        problems.append("jobs must be a positive integer")

    oracle = raw.get("oracle")
    if not isinstance(oracle, dict) or oracle.get("kind") not in ORACLE_KINDS:
        problems.append(f"oracle.kind must be one of {', '.join(ORACLE_KINDS)}")
    else:
        params = oracle.get("params")
        if not isinstance(params, dict):
            problems.append("oracle.params must be an object")
        elif oracle["kind"] == "remote" and not params.get("endpoint"):
            problems.append("remote oracle needs params.endpoint")
        elif oracle["kind"] == "local" and not (params.get("model") and params.get("manifest")):
            problems.append("local oracle needs params.model and params.manifest")

    experiment = raw.get("experiment")
    kind = None
    if not isinstance(experiment, dict) or experiment.get("kind") not in EXPERIMENT_KINDS:
        problems.append(f"experiment.kind must be one of {', '.join(EXPERIMENT_KINDS)}")
    else:
        kind = experiment["kind"]
        if not isinstance(experiment.get("params", {}), dict):
            problems.append("experiment.params must be an object")

    io_block = raw.get("io")
    if not isinstance(io_block, dict) or not io_block.get("out_dir"):
        problems.append("io.out_dir is required")
    elif kind in _NEEDS_INPUT_DIR and not io_block.get("input_dir"):
        problems.append(f"io.input_dir is required for {kind}")

    if kind is not None and isinstance(experiment.get("params", {}), dict):
        problems.extend(_validate_experiment_params(kind, experiment.get("params", {})))
    return problems


def _validate_experiment_params(kind: str, params: dict) -> list[str]:
    problems = []
    needs_patch = kind in ("spatial-map", "cumulative")
    needs_pool = kind in ("attack", "study-transparency", "study-decoys", "local-curve")
    if needs_patch and not params.get("patch"):
        problems.append(f"{kind} needs params.patch (path to a saved patch PNG)")
    if needs_pool and not (params.get("patches") or params.get("patch")):
        problems.append(f"{kind} needs params.patches (list of patch PNG paths)")
    if kind == "extract-patches":
        if not params.get("class_id"):
            problems.append("extract-patches needs params.class_id")
        if not params.get("window_sizes"):
            problems.append("extract-patches needs params.window_sizes")
    if kind == "local-curve" and not params.get("scales"):
        problems.append("local-curve needs params.scales")
    if kind == "cumulative" and params.get("mode") not in ("activation", "inhibition"):
        problems.append("cumulative needs params.mode = activation | inhibition")
    if kind == "study-transparency" and not params.get("taus"):
        problems.append("study-transparency needs params.taus")
    return problems


def load_config(path) -> CampaignConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, ValueError) as exc:
        raise ConfigError([f"cannot read config {path}: {exc}"]) from exc
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> CampaignConfig:
    problems = validate_config(raw)
    if problems:
        raise ConfigError(problems)
    return CampaignConfig(
        oracle=raw["oracle"],
        experiment=raw["experiment"],
        io=raw["io"],
        seed=raw.get("seed", 0),
        budget=raw.get("budget"),
        jobs=raw.get("jobs", 1),
    )


def build_oracle(cfg: CampaignConfig) -> Oracle:
    budget = OracleBudget(cfg.budget)
    kind = cfg.oracle["kind"]
    params = cfg.oracle["params"]
    if kind == "synthetic":
        return SyntheticOracle(_synthetic_spec_from_params(params), budget)
    if kind == "local":
        return LocalOracle(params["model"], params["manifest"], budget)
    if kind == "remote":
        in_w, in_h, in_c = params.get("input", [224, 224, 3])
        return RemoteOracle(params["endpoint"], (in_h, in_w, in_c), budget,
                            timeout=float(params.get("timeout", 30.0)))
    raise ConfigError([f"unknown oracle kind {kind!r}"])


def _synthetic_spec_from_params(params: dict):
    preset = params.get("preset", "random")
    w, h, c = params.get("canvas", [64, 64, 1])
    classes = [str(x) for x in params.get("classes", ["alpha", "beta", "gamma"])]
    temperature = float(params.get("temperature", 1.0))
    if preset == "uniform":
        return uniform_synthetic_spec(w, h, c, classes, temperature)
    if preset == "hotspot":
        cell = params.get("cell")
        if not cell:
            raise ConfigError(["hotspot synthetic oracle needs params.cell [x,y,w,h]"])
        hot_cell = Rect(*[int(v) for v in cell])
        rng = np.random.default_rng(int(params.get("spec_seed", 0)))
        pattern = rng.uniform(0.2, 1.0, size=(hot_cell.h, hot_cell.w, c)).astype(np.float32)
        return hotspot_synthetic_spec(
            w, h, c, classes, params.get("hot_class", classes[0]), hot_cell, pattern,
            base_weight=float(params.get("base_weight", 0.05)),
            hot_weight=float(params.get("hot_weight", 4.0)),
            temperature=temperature,
        )
    if preset == "random":
        return random_synthetic_spec(
            w, h, c, classes, int(params.get("spec_seed", 0)), temperature,
            negative_weights=bool(params.get("negative_weights", False)),
        )
    raise ConfigError([f"unknown synthetic preset {preset!r}"])


@dataclass
class RunOutcome:
    outputs: list[Path] = field(default_factory=list)
    report_path: Path | None = None


def _utc_now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def write_manifest(out_dir: Path, cfg: CampaignConfig, oracle: Oracle,
                   outputs, started_at: str) -> Path:
    manifest = {
        "config_hash": cfg.config_hash(),
        "started_at": started_at,
        "finished_at": _utc_now(),
        "oracle_id": oracle.oracle_id,
        "query_count": oracle.budget.consumed,
        "outputs": sorted(str(Path(p).relative_to(out_dir)) for p in outputs),
    }
    path = out_dir / "run_manifest.json"
    fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=".manifest-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)  # atomic publish
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _write_json(payload: dict, path: Path) -> Path:
    with path.open("w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _load_inputs(cfg: CampaignConfig, oracle: Oracle, n: int):
    names = sample_images(cfg.input_dir, n, cfg.seed)
    images = [
        fit_to_oracle(load_png(Path(cfg.input_dir) / name), oracle) for name in names
    ]
    return names, images


def _load_pool(params: dict) -> list[probing.Patch]:
    paths = params.get("patches") or ([params["patch"]] if params.get("patch") else [])
    pool = [load_patch(p) for p in paths]
    if not pool:
        raise EmptyError("no patches given")
    return pool


def _attack_config(cfg: CampaignConfig, oracle: Oracle, params: dict,
                   tau: float | None = None) -> deepception.AttackConfig:
    grid = None
    if params.get("grid_cell"):
        in_h, in_w, _ = oracle.input_size
        grid = make_grid(in_w, in_h, int(params["grid_cell"]))
    return deepception.AttackConfig(
        tau=float(tau if tau is not None else params.get("tau", 4.0)),
        grid=grid,
        max_decoys=params.get("max_decoys"),
        query_budget=params.get("query_budget"),
    )


def run(cfg: CampaignConfig) -> RunOutcome:
    """Dispatch one experiment, then write reports, plots and the manifest."""
    started_at = _utc_now()
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    oracle = build_oracle(cfg)
    kind = cfg.experiment["kind"]
    params = cfg.experiment.get("params", {})
    runner = _EXPERIMENTS[kind]
    outcome = runner(cfg, oracle, params, out_dir)
    manifest = write_manifest(out_dir, cfg, oracle, outcome.outputs, started_at)
    outcome.outputs.append(manifest)
    return outcome


def _run_extract_patches(cfg, oracle, params, out_dir) -> RunOutcome:
    names, images = _load_inputs(cfg, oracle, int(params.get("n_images", 4)))
    patch = probing.extract_best_patch(
        images, str(params["class_id"]), [int(s) for s in params["window_sizes"]],
        oracle, image_ids=names,
    )
    png, meta = save_patch(patch, out_dir / "patch.png")
    return RunOutcome(outputs=[png, meta], report_path=meta)


def _run_local_curve(cfg, oracle, params, out_dir) -> RunOutcome:
    pool = _load_pool(params)
    scales = [int(s) for s in params["scales"]]
    curve = probing.local_property_curve(pool, scales, oracle)
    csv_path = out_dir / "local_curve.csv"
    with csv_path.open("w", newline="") as fh:
        fh.write("scale,resized_mean,embedded_mean\n")
        for s in scales:
            fh.write(f"{s},{curve[s]['resized']!r},{curve[s]['embedded']!r}\n")
    svg = render_plot(
        {
            "x": scales,
            "series": {
                "resized": [curve[s]["resized"] for s in scales],
                "embedded": [curve[s]["embedded"] for s in scales],
            },
            "xlabel": "patch scale (px)",
            "ylabel": "mean probability",
            "title": "probability vs patch scale",
        },
        "curve",
        out_dir / "local_curve.svg",
    )
    return RunOutcome(outputs=[csv_path, svg], report_path=csv_path)


def _run_spatial_map(cfg, oracle, params, out_dir) -> RunOutcome:
    patch = load_patch(params["patch"])
    in_h, in_w, _ = oracle.input_size
    stride = int(params.get("stride") or patch.image.shape[1])
    pmap = probing.spatial_map(patch, (in_w, in_h), stride, oracle, jobs=cfg.jobs)
    stats = probing.spatial_stats(pmap)
    map_csv = out_dir / "spatial_map.csv"
    probing.write_spatial_map_csv(pmap, map_csv)
    stats_csv = out_dir / "spatial_stats.csv"
    probing.write_spatial_summary_csv(oracle.oracle_id, [stats], stats_csv)
    svg = render_plot(spatial_heatmap_data(pmap), "heatmap", out_dir / "spatial_map.svg")
    return RunOutcome(outputs=[map_csv, stats_csv, svg], report_path=map_csv)


def _run_cumulative(cfg, oracle, params, out_dir) -> RunOutcome:
    patch = load_patch(params["patch"])
    in_h, in_w, _ = oracle.input_size
    trace = probing.greedy_cumulative(patch, params["mode"], (in_w, in_h), oracle,
                                      jobs=cfg.jobs)
    trace_csv = out_dir / "trace.csv"
    probing.write_trace_csv(trace, trace_csv)
    svg = render_plot(
        {
            "x": list(range(1, len(trace.steps) + 1)),
            "series": {trace.mode: [p for _, p in trace.steps]},
            "xlabel": "placement step",
            "ylabel": "probability",
            "title": f"greedy {trace.mode} (gain {trace.gain:.4g})",
        },
        "curve",
        out_dir / "trace.svg",
    )
    return RunOutcome(outputs=[trace_csv, svg], report_path=trace_csv)


def _campaign_report_payload(cfg: CampaignConfig, report) -> dict:
    payload = report.to_dict()
    payload["schema_version"] = SCHEMA_VERSION
    payload["config"] = cfg.to_dict()
    payload["config_hash"] = cfg.config_hash()
    return payload


def _run_attack(cfg, oracle, params, out_dir) -> RunOutcome:
    pool = _load_pool(params)
    attack_cfg = _attack_config(cfg, oracle, params)
    decoy = deepception.select_decoy(pool, attack_cfg.tau)
    names, images = _load_inputs(cfg, oracle, int(params.get("n_images", 1)))
    outputs = []
    sink = None
    if params.get("save_perturbed"):
        def sink(image_id, res):
            out_png = out_dir / f"perturbed_{image_id}"
            save_png(res.perturbed_image, out_png)
            outputs.append(out_png)
    report = deepception.fooling_campaign(images, decoy, attack_cfg, oracle,
                                          image_ids=names, jobs=cfg.jobs,
                                          on_result=sink)
    outputs.sort()
    report_path = _write_json(_campaign_report_payload(cfg, report),
                              out_dir / "attack_report.json")
    curve = report.fooled_vs_decoy_budget
    svg = render_plot(
        {
            "x": list(range(len(curve))),
            "series": {"fooled": curve},
            "xlabel": "decoy budget",
            "ylabel": "images fooled",
            "title": "fooled images vs inserted decoys",
        },
        "curve",
        out_dir / "fooled_vs_decoys.svg",
    )
    return RunOutcome(outputs=[report_path, svg, *outputs], report_path=report_path)


def _run_study_transparency(cfg, oracle, params, out_dir) -> RunOutcome:
    pool = _load_pool(params)
    attack_cfg = _attack_config(cfg, oracle, params)
    names, images = _load_inputs(cfg, oracle, int(params.get("n_images", 1)))
    rows = deepception.transparency_study(images, pool,
                                          [float(t) for t in params["taus"]],
                                          attack_cfg, oracle, image_ids=names,
                                          jobs=cfg.jobs)
    csv_path = out_dir / "transparency_study.csv"
    deepception.write_transparency_csv(rows, csv_path)
    svg = render_plot(
        {
            "x": [r.tau for r in rows],
            "series": {"fooling ratio": [r.fooling_ratio for r in rows]},
            "xlabel": "transparency coefficient",
            "ylabel": "fooling ratio",
            "title": "fooling ratio vs transparency",
        },
        "curve",
        out_dir / "transparency_study.svg",
    )
    return RunOutcome(outputs=[csv_path, svg], report_path=csv_path)


def _run_study_decoys(cfg, oracle, params, out_dir) -> RunOutcome:
    pool = _load_pool(params)
    attack_cfg = _attack_config(cfg, oracle, params)
    decoys = [
        make_decoy(flatten_to_gray(p.image), attack_cfg.tau, source_patch_id=p.patch_id)
        for p in pool
    ]
    names, images = _load_inputs(cfg, oracle, int(params.get("n_images", 1)))
    rows = deepception.decoy_std_study(
        images, decoys, attack_cfg, oracle,
        noise_stds_255=[float(s) for s in params.get("noise_stds", [100.0, 150.0])],
        noise_seed=cfg.seed, image_ids=names, jobs=cfg.jobs,
    )
    csv_path = out_dir / "decoy_std_study.csv"
    deepception.write_decoy_study_csv(rows, csv_path)
    svg = render_plot(
        {
            "points": [(r.std, r.fooled_count) for r in rows if not r.is_baseline],
            "baseline_points": [(r.std, r.fooled_count) for r in rows if r.is_baseline],
            "xlabel": "decoy std",
            "ylabel": "images fooled",
            "title": "fooling vs decoy standard deviation",
        },
        "scatter",
        out_dir / "decoy_std_study.svg",
    )
    return RunOutcome(outputs=[csv_path, svg], report_path=csv_path)


_EXPERIMENTS = {
    "extract-patches": _run_extract_patches,
    "local-curve": _run_local_curve,
    "spatial-map": _run_spatial_map,
    "cumulative": _run_cumulative,
    "attack": _run_attack,
    "study-transparency": _run_study_transparency,
    "study-decoys": _run_study_decoys,
}


def render_report(report_path, out_dir) -> list[Path]:
    """Re-render figures and a CSV mirror from an existing campaign report."""
    report_path = Path(report_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        with report_path.open("r", encoding="utf-8") as fh:
            payload = json.load(fh)
        rows = payload["rows"]
        aggregate = payload["aggregate"]
    except (OSError, ValueError, KeyError) as exc:
        raise InputError(f"cannot read campaign report {report_path}: {exc}") from exc
    outputs = []
    csv_path = out_dir / "report_rows.csv"
    with csv_path.open("w", newline="") as fh:
        fh.write("image_id,fooled,decoys_used,p_t_initial,p_t_final,"
                 "adversarial_class,queries,error\n")
        for r in rows:
            p_init = "" if r["p_t_initial"] is None else repr(r["p_t_initial"])
            p_final = "" if r["p_t_final"] is None else repr(r["p_t_final"])
            fh.write(
                f"{r['image_id']},{int(bool(r['fooled']))},{r['decoys_used']},"
                f"{p_init},{p_final},"
                f"{r['adversarial_class'] or ''},{r['queries']},{r['error'] or ''}\n"
            )
    outputs.append(csv_path)
    curve = aggregate["fooled_vs_decoy_budget"]
    outputs.append(render_plot(
        {
            "x": list(range(len(curve))),
            "series": {"fooled": curve},
            "xlabel": "decoy budget",
            "ylabel": "images fooled",
            "title": "fooled images vs inserted decoys",
        },
        "curve",
        out_dir / "fooled_vs_decoys.svg",
    ))
    bins = aggregate["initial_pt_bins"]
    outputs.append(render_plot(
        {
            "labels": [f"{b['p_t_low']:.1f}-{b['p_t_high']:.1f}" for b in bins],
            "values": [b["fooled"] for b in bins],
            "xlabel": "initial target probability",
            "ylabel": "images fooled",
            "title": "foolings vs initial probability",
        },
        "bar",
        out_dir / "foolings_vs_initial_pt.svg",
    ))
    return outputs
