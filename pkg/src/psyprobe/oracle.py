"""Classifier-as-oracle abstraction: synthetic, local ONNX-backend and remote HTTP.

Every oracle is an image -> class-probability mapping with declared input
dims and an attached query budget; nothing else about the model is exposed.
"""

from __future__ import annotations

import base64
import hashlib
import json
import math
import threading
import time
from dataclasses import dataclass

import numpy as np

from .errors import (
    BudgetExhaustedError,
    ClassError,
    FormatError,
    InputError,
    ParameterError,
    ProtocolError,
    TransportError,
)
from .image import Rect, png_bytes, validate_image


@dataclass
class ClassProbabilities:
    """One oracle answer: class id -> probability, plus the running query count."""

    entries: dict[str, float]
    query_count_hint: int = 0

    def __post_init__(self):
        for cls, p in self.entries.items():
            if not (0.0 <= p <= 1.0) or math.isnan(p):
                raise ProtocolError(f"probability of {cls!r} outside [0,1]: {p}")

    def top1(self) -> str:
        """Class with the highest probability; ties break lexicographically."""
        if not self.entries:
            raise ClassError("empty probability vector")
        return min(self.entries, key=lambda c: (-self.entries[c], c))

    def probability(self, class_id: str) -> float:
        try:
            return self.entries[class_id]
        except KeyError:
            raise ClassError(f"unknown class {class_id!r}") from None


class OracleBudget:
    """Atomic counter of oracle calls; max_queries=None means unlimited."""

    def __init__(self, max_queries: int | None = None):
        if max_queries is not None and max_queries < 0:
            raise ParameterError(f"max_queries must be >= 0, got {max_queries}")
        self.max_queries = max_queries
        self._consumed = 0
        self._lock = threading.Lock()

    @property
    def consumed(self) -> int:
        return self._consumed

    @property
    def remaining(self) -> int | None:
        if self.max_queries is None:
            return None
        return self.max_queries - self._consumed

    def spend(self) -> int:
        with self._lock:
            if self.max_queries is not None and self._consumed >= self.max_queries:
                raise BudgetExhaustedError(
                    f"oracle budget of {self.max_queries} queries exhausted"
                )
            self._consumed += 1
            return self._consumed


class Oracle:
    """Base oracle: input validation + budget accounting around _run()."""

    def __init__(self, input_size: tuple[int, int, int], oracle_id: str,
                 budget: OracleBudget | None = None):
        self.input_size = tuple(int(v) for v in input_size)  # (h, w, c)
        self.oracle_id = oracle_id
        self.budget = budget if budget is not None else OracleBudget()

    def classify(self, img: np.ndarray) -> ClassProbabilities:
        validate_image(img)
        if tuple(img.shape) != self.input_size:
            raise InputError(
                f"oracle expects {self.input_size} input, got {tuple(img.shape)}"
            )
        count = self.budget.spend()
        vec = self._run(img)
        vec.query_count_hint = count
        return vec

    def probability_of(self, img: np.ndarray, class_id: str) -> float:
        return self.classify(img).probability(class_id)

    def _run(self, img: np.ndarray) -> ClassProbabilities:
        raise NotImplementedError


def softmax(scores, temperature: float = 1.0) -> np.ndarray:
    if temperature <= 0:
        raise ParameterError(f"temperature must be > 0, got {temperature}")
    s = np.asarray(scores, dtype=np.float64) / temperature
    e = np.exp(s - s.max())
    return e / e.sum()


@dataclass
class SyntheticOracleSpec:
    """Deterministic test oracle with planted spatial structure.

    Per class there is one sensitivity map (per-pixel weights, negative
    allowed for inhibitory structure) and one reference template. Score is
    the map-weighted L1 similarity between image and template; class
    probabilities are the tempered softmax of the scores.
    """

    canvas_dims: tuple[int, int, int]  # (h, w, c)
    classes: list[str]
    sensitivity_maps: dict[str, np.ndarray]
    templates: dict[str, np.ndarray]
    temperature: float = 1.0
    score_floor: float | None = None
    name: str = ""

    def __post_init__(self):
        if self.temperature <= 0:
            raise ParameterError(f"temperature must be > 0, got {self.temperature}")
        for cls in self.classes:
            if cls not in self.sensitivity_maps or cls not in self.templates:
                raise InputError(f"class {cls!r} is missing a map or template")
            if tuple(self.sensitivity_maps[cls].shape) != tuple(self.canvas_dims):
                raise InputError(f"sensitivity map for {cls!r} has wrong dims")
            if tuple(self.templates[cls].shape) != tuple(self.canvas_dims):
                raise InputError(f"template for {cls!r} has wrong dims")

    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        digest.update(repr((self.canvas_dims, self.classes, self.temperature,
                            self.score_floor)).encode())
        for cls in self.classes:
            digest.update(np.ascontiguousarray(self.sensitivity_maps[cls], dtype="<f8").tobytes())
            digest.update(np.ascontiguousarray(self.templates[cls], dtype="<f8").tobytes())
        return digest.hexdigest()[:12]


def synthetic_score(spec: SyntheticOracleSpec, img: np.ndarray, class_id: str) -> float:
    """Raw class score: sum over pixels of map * (1 - |img - template|).

    Accumulated with math.fsum so the result is the exactly-rounded sum and
    therefore independent of pixel order: spatially-uniform configurations
    give bit-identical scores wherever a patch is placed.
    """
    if class_id not in spec.templates:
        raise ClassError(f"unknown class {class_id!r}")
    similarity = 1.0 - np.abs(img.astype(np.float64) - spec.templates[class_id].astype(np.float64))
    contrib = spec.sensitivity_maps[class_id].astype(np.float64) * similarity
    score = math.fsum(contrib.ravel().tolist())
    if spec.score_floor is not None:
        score = max(score, spec.score_floor)
    return score


class SyntheticOracle(Oracle):
    def __init__(self, spec: SyntheticOracleSpec, budget: OracleBudget | None = None):
        h, w, c = spec.canvas_dims
        oracle_id = f"synthetic:{spec.name or spec.fingerprint()}"
        super().__init__((h, w, c), oracle_id, budget)
        self.spec = spec

    def _run(self, img: np.ndarray) -> ClassProbabilities:
        scores = [synthetic_score(self.spec, img, cls) for cls in self.spec.classes]
        probs = softmax(scores, self.spec.temperature)
        return ClassProbabilities({cls: float(p) for cls, p in zip(self.spec.classes, probs)})


def uniform_synthetic_spec(w: int, h: int, channels: int, classes: list[str],
                           temperature: float = 1.0) -> SyntheticOracleSpec:
    """Translation-invariant configuration: constant templates, uniform maps."""
    dims = (h, w, channels)
    n = len(classes)
    maps = {cls: np.ones(dims, dtype=np.float64) for cls in classes}
    templates = {
        cls: np.full(dims, (i + 1) / (n + 1), dtype=np.float32)
        for i, cls in enumerate(classes)
    }
    return SyntheticOracleSpec(dims, list(classes), maps, templates, temperature,
                               name="uniform")


def hotspot_synthetic_spec(w: int, h: int, channels: int, classes: list[str],
                           hot_class: str, hot_cell: Rect, pattern: np.ndarray,
                           base_weight: float = 0.05, hot_weight: float = 4.0,
                           temperature: float = 1.0) -> SyntheticOracleSpec:
    """Plant one spatial hotspot: hot_class responds strongly to `pattern` at hot_cell."""
    if hot_class not in classes:
        raise InputError(f"{hot_class!r} not among classes")
    dims = (h, w, channels)
    maps = {cls: np.full(dims, base_weight, dtype=np.float64) for cls in classes}
    templates = {cls: np.full(dims, 0.5, dtype=np.float32) for cls in classes}
    hot_template = np.zeros(dims, dtype=np.float32)
    hot_template[hot_cell.y : hot_cell.y + hot_cell.h,
                 hot_cell.x : hot_cell.x + hot_cell.w] = pattern
    hot_map = np.full(dims, base_weight, dtype=np.float64)
    hot_map[hot_cell.y : hot_cell.y + hot_cell.h,
            hot_cell.x : hot_cell.x + hot_cell.w] = hot_weight
    templates[hot_class] = hot_template
    maps[hot_class] = hot_map
    return SyntheticOracleSpec(dims, list(classes), maps, templates, temperature,
                               name="hotspot")


def random_synthetic_spec(w: int, h: int, channels: int, classes: list[str], seed: int,
                          temperature: float = 1.0,
                          negative_weights: bool = False) -> SyntheticOracleSpec:
    """Seeded random maps and templates; negative weights plant inhibitory structure."""
    rng = np.random.default_rng(seed)
    dims = (h, w, channels)
    lo = -1.0 if negative_weights else 0.0
    maps = {cls: rng.uniform(lo, 1.0, size=dims) for cls in classes}
    templates = {cls: rng.uniform(0.0, 1.0, size=dims).astype(np.float32) for cls in classes}
    return SyntheticOracleSpec(dims, list(classes), maps, templates, temperature,
                               name=f"random-{seed}")


class LocalOracle(Oracle):
    """Backend for an ONNX model file plus its sidecar JSON manifest.

    The manifest declares input dims, per-channel mean/std preprocessing and
    the label list; inference runs through cv2.dnn.
    """

    def __init__(self, model_path, manifest_path, budget: OracleBudget | None = None):
        import cv2

        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        try:
            in_w = int(manifest["input_w"])
            in_h = int(manifest["input_h"])
            self.mean = np.asarray(manifest["mean"], dtype=np.float32)
            self.std = np.asarray(manifest["std"], dtype=np.float32)
            self.labels = [str(x) for x in manifest["labels"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"bad oracle manifest: {exc}") from exc
        if len(self.mean) != len(self.std) or len(self.mean) not in (1, 3):
            raise FormatError("manifest mean/std must both have 1 or 3 entries")
        channels = len(self.mean)
        with open(model_path, "rb") as fh:
            model_blob = fh.read()
        oracle_id = manifest.get("model_id") or (
            "local:" + hashlib.sha256(model_blob).hexdigest()[:12]
        )
        super().__init__((in_h, in_w, channels), str(oracle_id), budget)
        self._net = cv2.dnn.readNetFromONNX(str(model_path))
        self._net_lock = threading.Lock()  # cv2 nets are not reentrant

    def _run(self, img: np.ndarray) -> ClassProbabilities:
        x = (img - self.mean) / self.std
        blob = x.astype(np.float32).transpose(2, 0, 1)[None, :, :, :]
        with self._net_lock:
            self._net.setInput(blob)
            out = np.asarray(self._net.forward(), dtype=np.float64).ravel()
        if out.size != len(self.labels):
            raise FormatError(
                f"model emits {out.size} values but manifest lists {len(self.labels)} labels"
            )
        if out.min() < -1e-6 or out.max() > 1.0 + 1e-6 or abs(out.sum() - 1.0) > 1e-6:
            raise ProtocolError("model output is not a probability vector")
        out = np.clip(out, 0.0, 1.0)
        return ClassProbabilities({cls: float(p) for cls, p in zip(self.labels, out)})


class RemoteOracle(Oracle):
    """HTTP classifier client: POST /classify with a base64 PNG body.

    Retries transient failures (5xx, transport errors) with exponential
    backoff; client errors and malformed bodies fail immediately.
    """

    MAX_ATTEMPTS = 3
    BACKOFF_S = 0.1

    def __init__(self, endpoint: str, input_size: tuple[int, int, int],
                 budget: OracleBudget | None = None, timeout: float = 30.0,
                 session=None, sleep=time.sleep):
        super().__init__(input_size, f"remote:{endpoint}", budget)
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self._sleep = sleep
        if session is None:
            import requests

            session = requests.Session()
        self._session = session

    def _post(self, payload: dict):
        import requests

        try:
            return self._session.post(
                f"{self.endpoint}/classify", json=payload, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise TransportError(f"request to {self.endpoint} failed: {exc}") from exc

    def _run(self, img: np.ndarray) -> ClassProbabilities:
        payload = {"image_png_b64": base64.b64encode(png_bytes(img)).decode("ascii")}
        last_error: Exception | None = None
        for attempt in range(self.MAX_ATTEMPTS):
            try:
                resp = self._post(payload)
            except TransportError as exc:
                last_error = exc
                if attempt + 1 < self.MAX_ATTEMPTS:
                    self._sleep(self.BACKOFF_S * 2**attempt)
                continue
            if resp.status_code >= 500:
                last_error = TransportError(f"server returned {resp.status_code}")
                if attempt + 1 < self.MAX_ATTEMPTS:
                    self._sleep(self.BACKOFF_S * 2**attempt)
                continue
            if resp.status_code >= 400:
                raise TransportError(f"server returned {resp.status_code}")
            return self._parse(resp)
        raise last_error if last_error else TransportError("no response")

    def _parse(self, resp) -> ClassProbabilities:
        try:
            body = resp.json()
        except ValueError as exc:
            raise ProtocolError(f"response body is not JSON: {exc}") from exc
        if not isinstance(body, dict) or not isinstance(body.get("probabilities"), dict):
            raise ProtocolError("response lacks a 'probabilities' mapping")
        entries = {}
        for cls, p in body["probabilities"].items():
            if not isinstance(p, (int, float)):
                raise ProtocolError(f"probability of {cls!r} is not numeric")
            entries[str(cls)] = float(p)
        model_id = body.get("model_id")
        if model_id:
            self.oracle_id = f"remote:{model_id}"
        return ClassProbabilities(entries)
