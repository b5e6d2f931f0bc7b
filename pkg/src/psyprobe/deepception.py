"""Deepception: greedy decoy insertion that drives down the target class
probability until the top-1 class flips, plus the campaign/study harnesses.
"""

from __future__ import annotations

import csv
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    BudgetExhaustedError,
    EmptyError,
    InputError,
    ParameterError,
    PsyprobeError,
    TilingError,
)
from .image import (
    Decoy,
    Grid,
    Rect,
    apply_decoy,
    flatten_to_gray,
    gaussian_noise_image,
    make_decoy,
    normalize_patch,
    resize_decoy,
    validate_image,
)
from .oracle import Oracle
from .probing import Patch


@dataclass(frozen=True)
class AttackConfig:
    """Knobs of one attack run; target class is always top-1 of the original."""

    tau: float = 4.0
    grid: Grid | None = None  # None -> 4x4 tiling of the oracle input
    max_decoys: int | None = None  # None -> one decoy per grid cell
    query_budget: int | None = None
    target_class_source: str = "top1-of-original"

    def __post_init__(self):
        if self.tau < 1.0:
            raise ParameterError(f"tau must be >= 1, got {self.tau}")
        if (self.max_decoys is not None and self.grid is not None
                and self.max_decoys > self.grid.cell_count):
            raise ParameterError("max_decoys exceeds the grid cell count")


def resolve_grid(cfg: AttackConfig, oracle: Oracle) -> Grid:
    """The attack grid: cfg.grid, or a 4x4 tiling of the oracle input."""
    in_h, in_w, _ = oracle.input_size
    grid = cfg.grid
    if grid is None:
        if in_w % 4 or in_h % 4:
            raise TilingError(f"{in_w}x{in_h} input has no 4x4 tiling")
        grid = Grid(cell_w=in_w // 4, cell_h=in_h // 4, cols=4, rows=4)
    if grid.cols * grid.cell_w != in_w or grid.rows * grid.cell_h != in_h:
        raise TilingError(f"{grid} does not tile a {in_w}x{in_h} image")
    return grid


@dataclass
class AttackResult:
    fooled: bool
    decoys_used: int
    placements: list[Rect]
    p_target_initial: float
    p_target_final: float
    adversarial_class: str | None
    queries_consumed: int
    perturbed_image: np.ndarray
    p_target_trace: list[float] = field(default_factory=list)
    budget_exhausted: bool = False


@dataclass(frozen=True)
class DecoyStudyRow:
    decoy_id: str
    std: float
    fooled_count: int
    is_baseline: bool = False


@dataclass(frozen=True)
class TransparencyRow:
    tau: float
    fooling_ratio: float
    fooled_count: int
    total: int


@dataclass
class ImageRow:
    image_id: str
    fooled: bool
    decoys_used: int
    p_t_initial: float | None
    p_t_final: float | None
    adversarial_class: str | None
    queries: int
    error: str | None = None


@dataclass
class CampaignReport:
    oracle_id: str
    rows: list[ImageRow]
    fooling_ratio: float
    fooled_count: int
    total: int
    first_placement_fooled: int
    fooled_vs_decoy_budget: list[int]
    initial_pt_bins: list[dict]

    def to_dict(self) -> dict:
        return {
            "oracle_id": self.oracle_id,
            "rows": [
                {
                    "image_id": r.image_id,
                    "fooled": r.fooled,
                    "decoys_used": r.decoys_used,
                    "p_t_initial": r.p_t_initial,
                    "p_t_final": r.p_t_final,
                    "adversarial_class": r.adversarial_class,
                    "queries": r.queries,
                    "error": r.error,
                }
                for r in self.rows
            ],
            "aggregate": {
                "fooling_ratio": self.fooling_ratio,
                "fooled_count": self.fooled_count,
                "total": self.total,
                "first_placement_fooled": self.first_placement_fooled,
                "fooled_vs_decoy_budget": self.fooled_vs_decoy_budget,
                "initial_pt_bins": self.initial_pt_bins,
            },
        }


def select_decoy(pool, tau: float) -> Decoy:
    """Pick the pool patch maximizing probability x std of the normalized patch.

    Ties break deterministically on patch id. The winner is flattened to a
    single channel if needed and turned into a decoy at the given tau.
    """
    pool = list(pool)
    if not pool:
        raise EmptyError("decoy pool is empty")

    def score(patch: Patch) -> float:
        return patch.probability * float(np.std(normalize_patch(patch.image).astype(np.float64)))

    best = min(pool, key=lambda p: (-score(p), p.patch_id))
    return make_decoy(flatten_to_gray(best.image), tau, source_patch_id=best.patch_id)


class _BudgetStop(Exception):
    """Internal: the attack's own query budget ran out mid-step."""


def attack(target: np.ndarray, decoy: Decoy, cfg: AttackConfig, oracle: Oracle,
           jobs: int = 1) -> AttackResult:
    """Greedy decoy placement minimizing the target-class probability.

    Each step applies the decoy to every unoccupied grid cell and accepts
    the placement with the lowest resulting P_t, provided it strictly
    decreases. After every acceptance the fooling condition (some other
    class overtaking P_t) is checked with one full classification. Stops on
    fooling, no strict decrease, max_decoys, or budget exhaustion (which
    yields a partial, not-fooled result).
    """
    validate_image(target)
    in_h, in_w, _ = oracle.input_size
    if target.shape[0] != in_h or target.shape[1] != in_w:
        raise InputError(f"target is {target.shape[1]}x{target.shape[0]}, "
                         f"oracle expects {in_w}x{in_h}")
    grid = resolve_grid(cfg, oracle)
    decoy = resize_decoy(decoy, grid.cell_w, grid.cell_h)
    cells = grid.cells()
    max_decoys = cfg.max_decoys if cfg.max_decoys is not None else grid.cell_count
    if max_decoys > grid.cell_count:
        raise ParameterError("max_decoys exceeds the grid cell count")

    queries = 0
    count_lock = threading.Lock()

    def spend() -> None:
        nonlocal queries
        with count_lock:
            if cfg.query_budget is not None and queries >= cfg.query_budget:
                raise _BudgetStop()
            queries += 1

    def classify(img):
        spend()
        return oracle.classify(img)

    try:
        initial = classify(target)
    except _BudgetStop:
        raise BudgetExhaustedError("attack budget exhausted before the initial query")
    t = initial.top1()
    p_init = initial.probability(t)
    p_cur = p_init
    current = target
    placements: list[Rect] = []
    trace: list[float] = []
    adversarial: str | None = None
    fooled = False
    budget_out = False

    def probe(candidate: np.ndarray) -> float:
        spend()
        return oracle.probability_of(candidate, t)

    try:
        occupied: set[int] = set()
        while len(occupied) < max_decoys and not fooled:
            free = [i for i in range(len(cells)) if i not in occupied]
            candidates = {i: apply_decoy(current, decoy, cells[i]) for i in free}
            if jobs > 1:
                with ThreadPoolExecutor(max_workers=jobs) as pool:
                    scored = dict(pool.map(lambda i: (i, probe(candidates[i])), free))
            else:
                scored = {i: probe(candidates[i]) for i in free}
            pick = free[0]
            for i in free[1:]:
                if scored[i] < scored[pick]:
                    pick = i
            if not scored[pick] < p_cur:
                break
            current = candidates[pick]
            occupied.add(pick)
            placements.append(cells[pick])
            check = classify(current)  # per-acceptance fooling check
            p_cur = check.probability(t)
            trace.append(p_cur)
            others = {c: p for c, p in check.entries.items() if c != t}
            if others and max(others.values()) > p_cur:
                fooled = True
                adversarial = check.top1()
    except (_BudgetStop, BudgetExhaustedError):
        budget_out = True
        fooled = False

    return AttackResult(
        fooled=fooled,
        decoys_used=len(placements),
        placements=placements,
        p_target_initial=p_init,
        p_target_final=p_cur,
        adversarial_class=adversarial,
        queries_consumed=queries,
        perturbed_image=current,
        p_target_trace=trace,
        budget_exhausted=budget_out,
    )


def fooling_campaign(images, decoy: Decoy, cfg: AttackConfig, oracle: Oracle,
                     image_ids=None, jobs: int = 1, on_result=None) -> CampaignReport:
    """Attack every image; aggregate the fooling ratio and the figure-shaped
    breakdowns (fooled-vs-decoy-budget curve, initial-P_t bins).

    Per-image failures become error rows; the campaign never aborts.
    on_result, if given, is called with (image_id, AttackResult) per image.
    """
    images = list(images)
    if not images:
        raise EmptyError("campaign image set is empty")
    if image_ids is None:
        image_ids = [f"img{i:03d}" for i in range(len(images))]
    grid = resolve_grid(cfg, oracle)

    def run_one(idx: int) -> ImageRow:
        try:
            res = attack(images[idx], decoy, cfg, oracle)
        except PsyprobeError as exc:
            return ImageRow(image_ids[idx], False, 0, None, None,
                            None, 0, error=str(exc))
        if on_result is not None:
            on_result(image_ids[idx], res)
        return ImageRow(
            image_id=image_ids[idx],
            fooled=res.fooled,
            decoys_used=res.decoys_used,
            p_t_initial=res.p_target_initial,
            p_t_final=res.p_target_final,
            adversarial_class=res.adversarial_class,
            queries=res.queries_consumed,
        )

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run_one, range(len(images))))
    else:
        rows = [run_one(i) for i in range(len(images))]

    fooled_count = sum(1 for r in rows if r.fooled)
    total = len(rows)
    max_budget = cfg.max_decoys if cfg.max_decoys is not None else grid.cell_count
    curve = [
        sum(1 for r in rows if r.fooled and r.decoys_used <= b)
        for b in range(max_budget + 1)
    ]
    bins = []
    for lo10 in range(10):
        lo, hi = lo10 / 10.0, (lo10 + 1) / 10.0
        members = [r for r in rows if r.error is None
                   and lo <= r.p_t_initial < (hi if lo10 < 9 else 1.0 + 1e-9)]
        bins.append({
            "p_t_low": lo,
            "p_t_high": hi,
            "count": len(members),
            "fooled": sum(1 for r in members if r.fooled),
        })
    return CampaignReport(
        oracle_id=oracle.oracle_id,
        rows=rows,
        fooling_ratio=fooled_count / total,
        fooled_count=fooled_count,
        total=total,
        first_placement_fooled=sum(1 for r in rows if r.fooled and r.decoys_used == 1),
        fooled_vs_decoy_budget=curve,
        initial_pt_bins=bins,
    )


def transparency_study(images, decoy_pool, taus, cfg: AttackConfig, oracle: Oracle,
                       image_ids=None, jobs: int = 1) -> list[TransparencyRow]:
    """One campaign per transparency level, with the decoy rebuilt per tau."""
    taus = [float(t) for t in taus]
    if not taus:
        raise EmptyError("no transparency levels given")
    rows = []
    for tau in taus:
        decoy = select_decoy(decoy_pool, tau)
        report = fooling_campaign(images, decoy, replace(cfg, tau=tau), oracle,
                                  image_ids=image_ids, jobs=jobs)
        rows.append(TransparencyRow(tau, report.fooling_ratio,
                                    report.fooled_count, report.total))
    return rows


def decoy_std_study(images, decoys, cfg: AttackConfig, oracle: Oracle,
                    noise_stds_255=(100.0, 150.0), noise_seed: int = 0,
                    image_ids=None, jobs: int = 1) -> list[DecoyStudyRow]:
    """Fooled count per decoy, plus Gaussian-noise baselines, sorted by std.

    The baselines are noise buffers folded through the same decoy path
    (normalize, attenuate by cfg.tau) so only the content differs.
    """
    decoys = list(decoys)
    if not decoys:
        raise EmptyError("decoy pool is empty")
    grid = resolve_grid(cfg, oracle)
    entries: list[tuple[Decoy, str, bool]] = [
        (d, d.source_patch_id or f"decoy{i:02d}", False) for i, d in enumerate(decoys)
    ]
    for k, std in enumerate(noise_stds_255):
        noise = gaussian_noise_image(grid.cell_w, grid.cell_h, std,
                                     seed=noise_seed + k)
        entries.append(
            (make_decoy(noise, cfg.tau, source_patch_id=f"gaussian-std{std:g}"),
             f"gaussian-std{std:g}", True)
        )
    rows = []
    for decoy, decoy_id, is_baseline in entries:
        report = fooling_campaign(images, decoy, cfg, oracle,
                                  image_ids=image_ids, jobs=jobs)
        rows.append(DecoyStudyRow(decoy_id, decoy.std, report.fooled_count,
                                  is_baseline))
    return sorted(rows, key=lambda r: (r.std, r.decoy_id))


def write_transparency_csv(rows, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tau", "fooling_ratio", "fooled_count", "total"])
        for r in rows:
            writer.writerow([repr(r.tau), repr(r.fooling_ratio), r.fooled_count, r.total])


def write_decoy_study_csv(rows, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["decoy_id", "std", "fooled_count", "is_baseline"])
        for r in rows:
            writer.writerow([r.decoy_id, repr(r.std), r.fooled_count,
                             int(r.is_baseline)])
