import csv
import hashlib
import io
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from mfising.core.config import settings
from mfising.core.exceptions import InfeasibleParametersError, MatrixFormatError
from mfising.schemas.coupling import CouplingMatrix
from mfising.schemas.exact import MagnetizationLaw
from mfising.schemas.meanfield import ModelParams
from mfising.schemas.sampler import SampleBatch, SamplerConfig
from mfising.services.coupling import from_upper_triplets


logger = logging.getLogger(__name__)

MATRIX_MAGIC = "ising-coupling"
MATRIX_VERSION = "v1"


def format_float(value: float) -> str:
    """Shortest round-trip text for a float."""
    return repr(float(value))


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ============ Matrix files ============

def dump_matrix(coupling: CouplingMatrix) -> str:
    """
    Text form: `ising-coupling v1 <n> <nnz>`, optional `# key value` lines,
    then one `i j value` line per stored upper-triangle entry.
    """
    rows, cols, values = coupling.upper_triplets()
    lines = [f"{MATRIX_MAGIC} {MATRIX_VERSION} {coupling.n} {len(values)}"]
    if coupling.label:
        lines.append(f"# label {coupling.label}")
    if coupling.scale is not None:
        lines.append(f"# scale {format_float(coupling.scale)}")
    lines.extend(f"{i} {j} {value:.17g}" for i, j, value in zip(rows, cols, values))
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> CouplingMatrix:
    """Inverse of dump_matrix; either triangle may be given but each pair only once."""
    lines = [line.strip() for line in text.splitlines() if line.strip()]
    if not lines:
        raise MatrixFormatError("empty matrix file")
    header = lines[0].split()
    if len(header) != 4 or header[0] != MATRIX_MAGIC or header[1] != MATRIX_VERSION:
        raise MatrixFormatError(f"bad header {lines[0]!r}; expected '{MATRIX_MAGIC} {MATRIX_VERSION} <n> <nnz>'")
    try:
        n, nnz = int(header[2]), int(header[3])
    except ValueError as e:
        raise MatrixFormatError(f"bad header counts in {lines[0]!r}") from e
    if n <= 0 or nnz < 0:
        raise MatrixFormatError(f"header counts must be positive, got n={n}, nnz={nnz}")

    meta: Dict[str, str] = {}
    entries: Dict[tuple, float] = {}
    for number, line in enumerate(lines[1:], start=2):
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(" ")
            meta[key] = value.strip()
            continue
        parts = line.split()
        if len(parts) != 3:
            raise MatrixFormatError(f"line {number}: expected 'i j value'")
        try:
            i, j, value = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError as e:
            raise MatrixFormatError(f"line {number}: cannot parse {line!r}") from e
        if not (0 <= i < n and 0 <= j < n):
            raise MatrixFormatError(f"line {number}: index out of range for n={n}")
        if i == j:
            raise MatrixFormatError(f"line {number}: diagonal entry ({i}, {j})")
        if value < 0 or not np.isfinite(value):
            raise MatrixFormatError(f"line {number}: entry must be finite and nonnegative")
        key = (min(i, j), max(i, j))
        if key in entries:
            raise MatrixFormatError(f"line {number}: duplicate entry {key}")
        entries[key] = value

    if len(entries) != nnz:
        raise MatrixFormatError(f"header announces {nnz} entries, found {len(entries)}")
    pairs = sorted(entries)
    rows = np.array([p[0] for p in pairs], dtype=np.int64)
    cols = np.array([p[1] for p in pairs], dtype=np.int64)
    values = np.array([entries[p] for p in pairs], dtype=float)
    scale = float(meta["scale"]) if "scale" in meta else None
    return from_upper_triplets(n, rows, cols, values, label=meta.get("label", ""), scale=scale)


def read_matrix(path: Path) -> CouplingMatrix:
    path = Path(path)
    if not path.is_file():
        raise MatrixFormatError(f"matrix file {path} does not exist")
    coupling = parse_matrix(path.read_text())
    logger.info(f"Loaded n={coupling.n} coupling from {path}")
    return coupling


# ============ Tables ============

def render_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buffer.getvalue()


def read_law(path: Path) -> MagnetizationLaw:
    """Load a law CSV (`support,prob`) and its JSON sidecar."""
    path = Path(path)
    sidecar = json.loads(path.with_suffix(".json").read_text())
    with path.open(newline="") as handle:
        reader = csv.DictReader(handle)
        rows = [(int(r["support"]), float(r["prob"])) for r in reader]
    support = np.array([r[0] for r in rows], dtype=np.int64)
    with np.errstate(divide="ignore"):
        log_probs = np.log(np.array([r[1] for r in rows]))
    return MagnetizationLaw(
        n=sidecar["n"],
        support=support,
        log_probs=log_probs,
        log_z=sidecar["log_z"],
        label=sidecar.get("label", ""),
    )


def read_samples(path: Path) -> SampleBatch:
    """Load a sample CSV (`chain,draw,sigma_bar,m_sign`) and its JSON sidecar."""
    path = Path(path)
    sidecar = json.loads(path.with_suffix(".json").read_text())
    with path.open(newline="") as handle:
        rows = list(csv.DictReader(handle))
    return SampleBatch(
        n=sidecar["n"],
        chain=np.array([int(r["chain"]) for r in rows], dtype=np.int64),
        draw=np.array([int(r["draw"]) for r in rows], dtype=np.int64),
        sigma_bar=np.array([float(r["sigma_bar"]) for r in rows]),
        m_sign=np.array([int(r["m_sign"]) for r in rows], dtype=np.int8),
        label=sidecar.get("label", ""),
    )


# ============ Output directory ============

class StorageService:
    """Writes artifacts under one output directory and remembers what it wrote."""

    def __init__(self, output_dir: Optional[Path] = None):
        self.output_dir = Path(output_dir if output_dir is not None else settings.OUTPUT_DIR)
        self.emitted: List[Path] = []

    def _resolve(self, relative: str) -> Path:
        """Target path for `relative`, refusing anything outside output_dir."""
        root = self.output_dir.resolve()
        target = (root / relative).resolve()
        if target != root and root not in target.parents:
            raise InfeasibleParametersError("output paths must stay inside the output directory", str(relative))
        target.parent.mkdir(parents=True, exist_ok=True)
        return target

    def write_text(self, relative: str, text: str) -> Path:
        target = self._resolve(relative)
        target.write_text(text)
        if target not in self.emitted:
            self.emitted.append(target)
        logger.debug(f"Wrote {target}")
        return target

    def write_json(self, relative: str, data: Any) -> Path:
        return self.write_text(relative, json.dumps(data, indent=2, sort_keys=True, default=str) + "\n")

    def write_csv(self, relative: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        return self.write_text(relative, render_csv(header, rows))

    def save_matrix(self, coupling: CouplingMatrix, relative: str = "coupling.txt") -> Path:
        return self.write_text(relative, dump_matrix(coupling))

    def save_law(
        self,
        law: MagnetizationLaw,
        params: Optional[ModelParams] = None,
        relative: str = "law.csv",
    ) -> Path:
        """Law CSV plus a `{n, beta, B, log_z, label}` sidecar next to it."""
        path = self.write_csv(relative, ["support", "prob"], zip(law.support.tolist(), law.probs.tolist()))
        self.write_json(
            str(Path(relative).with_suffix(".json")),
            {
                "n": law.n,
                "beta": params.beta if params else None,
                "B": params.b_field if params else None,
                "log_z": law.log_z,
                "label": law.label,
            },
        )
        return path

    def save_samples(
        self,
        batch: SampleBatch,
        cfg: Optional[SamplerConfig] = None,
        relative: str = "samples.csv",
        extra: Optional[Dict[str, Any]] = None,
    ) -> Path:
        """Sample CSV plus a sidecar echoing the sampler config and provenance label."""
        rows = zip(batch.chain.tolist(), batch.draw.tolist(), batch.sigma_bar.tolist(), batch.m_sign.tolist())
        path = self.write_csv(relative, ["chain", "draw", "sigma_bar", "m_sign"], rows)
        sidecar = {"n": batch.n, "label": batch.label, "sampler": cfg.model_dump(mode="json") if cfg else None}
        sidecar.update(extra or {})
        self.write_json(str(Path(relative).with_suffix(".json")), sidecar)
        return path

    def write_manifest(self, config_sha256: Optional[str], version: str, seeds: Dict[str, Any]) -> Path:
        """manifest.json: config hash, tool version, seeds and every emitted file with its hash."""
        root = self.output_dir.resolve()
        files = [
            {"path": str(path.relative_to(root)), "sha256": sha256_file(path)}
            for path in self.emitted
            if path.name != "manifest.json"
        ]
        return self.write_json(
            "manifest.json",
            {"config_sha256": config_sha256, "version": version, "seeds": seeds, "files": files},
        )


# Singleton instance
storage_service = StorageService()


def get_storage_service(output_dir: Optional[Path] = None) -> StorageService:
    if output_dir is None:
        return storage_service
    return StorageService(output_dir)
