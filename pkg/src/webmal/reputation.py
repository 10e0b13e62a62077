"""File and PLD maliciousness scoring from multi-engine AV verdicts.

Each file carries a verdict vector over d engines. A file is malicious when
its detection ratio exceeds a threshold tau; a PLD is malicious when it hosts
at least one malicious file. The PLD ratio score averages per-file detection
ratios over all file occurrences (copies count), and the file-diversity
entropy summarizes how occurrences spread over distinct files.
"""

from __future__ import annotations

import gzip
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (EmptyProfile, EmptyVector, InputError, InvalidParams,
                     MissingVerdict)

DEFAULT_ENGINES = 56


# ---------------------------------------------------------------------------
# verdict matrix

@dataclass(frozen=True)
class VerdictMatrix:
    """Per-file verdict bit vectors, one shared engine count d.

    Vectors are stored as integers (bit k = engine k). d is a corpus-level
    constant; ragged rows are rejected at load rather than padded.
    """

    d: int
    masks: Mapping[str, int]

    def __post_init__(self) -> None:
        if self.d < 1:
            raise EmptyVector("engine count d must be >= 1")

    def __contains__(self, file_hash: str) -> bool:
        return file_hash in self.masks

    def __len__(self) -> int:
        return len(self.masks)

    def vector(self, file_hash: str) -> np.ndarray:
        mask = self._mask(file_hash)
        return np.array([(mask >> k) & 1 for k in range(self.d)], dtype=np.int8)

    def detections(self, file_hash: str) -> int:
        return self._mask(file_hash).bit_count()

    def ratio(self, file_hash: str) -> float:
        return self.detections(file_hash) / self.d

    def binary(self, file_hash: str, tau: float = 0.0) -> int:
        _check_tau(tau)
        return 1 if self.ratio(file_hash) > tau else 0

    def _mask(self, file_hash: str) -> int:
        try:
            return self.masks[file_hash]
        except KeyError:
            raise MissingVerdict(f"no verdict row for file {file_hash!r}") from None


def _check_tau(tau: float) -> None:
    if not (0.0 <= tau < 1.0):
        raise InvalidParams(f"tau must be in [0,1), got {tau}")


def file_score_binary(verdicts: Sequence[int], tau: float = 0.0) -> int:
    """Dichotomous file score: 1 iff the detection ratio exceeds tau."""
    _check_tau(tau)
    return 1 if file_score_ratio(verdicts) > tau else 0


def file_score_ratio(verdicts: Sequence[int]) -> float:
    """Detection ratio: fraction of engines flagging the file."""
    v = np.asarray(verdicts)
    if v.size == 0:
        raise EmptyVector("verdict vector is empty")
    return float(np.mean(v != 0))


# ---------------------------------------------------------------------------
# PLD profiles

@dataclass(frozen=True)
class PldFileProfile:
    """Files observed on one PLD with occurrence counts (k_i >= 1)."""

    pld: str
    files: Mapping[str, int]

    @property
    def n_unique(self) -> int:
        return len(self.files)

    @property
    def total(self) -> int:
        return sum(self.files.values())


def pld_dichotomy(profile: PldFileProfile, verdicts: VerdictMatrix,
                  tau: float = 0.0) -> str:
    """"malicious" iff some hosted file crosses the tau dichotomy."""
    _check_tau(tau)
    for h in profile.files:
        if verdicts.binary(h, tau):
            return "malicious"
    return "clean"


def pld_ratio_score(profile: PldFileProfile, verdicts: VerdictMatrix) -> float:
    """Occurrence-weighted mean detection ratio over the PLD's files.

    Every copy of a file contributes its ratio once, hence the 1/TF
    normalizer with k_i-weighted terms.
    """
    tf = profile.total
    if tf < 1:
        raise EmptyProfile(f"PLD {profile.pld!r} has no file occurrences")
    total = 0.0
    for h in sorted(profile.files):
        total += profile.files[h] * verdicts.ratio(h)
    return total / tf


def file_diversity_entropy(profile: PldFileProfile) -> float:
    """Shannon entropy (bits) of the occurrence distribution over files."""
    tf = profile.total
    if tf < 1:
        raise EmptyProfile(f"PLD {profile.pld!r} has no file occurrences")
    h = 0.0
    for name in sorted(profile.files):
        p = profile.files[name] / tf
        h -= p * math.log2(p)
    return h


@dataclass(frozen=True)
class PldReputation:
    pld: str
    dichotomy: str              # "clean" | "malicious"
    r_bar: float
    n_unique: int
    total: int
    entropy: float


def score_plds(profiles: Iterable[PldFileProfile], verdicts: VerdictMatrix,
               tau: float = 0.0) -> list[PldReputation]:
    """Score every profile; rows come back sorted by PLD name."""
    rows = []
    for prof in sorted(profiles, key=lambda p: p.pld):
        rows.append(PldReputation(
            pld=prof.pld,
            dichotomy=pld_dichotomy(prof, verdicts, tau),
            r_bar=pld_ratio_score(prof, verdicts),
            n_unique=prof.n_unique,
            total=prof.total,
            entropy=file_diversity_entropy(prof),
        ))
    return rows


# ---------------------------------------------------------------------------
# file formats

def _open_text(path: str):
    return gzip.open(path, "rt") if path.endswith(".gz") else open(path)


def read_verdicts(path: str) -> VerdictMatrix:
    """Load a verdict TSV: file_hash<TAB>d<TAB>detections_bitmask_hex."""
    masks: dict[str, int] = {}
    d: int | None = None
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise InputError(f"{path}:{lineno}: expected 3 fields, got {len(parts)}")
            file_hash, d_str, mask_hex = parts
            try:
                row_d = int(d_str)
                mask = int(mask_hex, 16)
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from None
            if row_d < 1:
                raise EmptyVector(f"{path}:{lineno}: d must be >= 1")
            if d is None:
                d = row_d
            elif row_d != d:
                raise InputError(f"{path}:{lineno}: d={row_d} differs from corpus d={d}")
            if mask < 0 or mask.bit_length() > d:
                raise InputError(f"{path}:{lineno}: bitmask has bits beyond engine {d - 1}")
            if file_hash in masks and masks[file_hash] != mask:
                raise InputError(f"{path}:{lineno}: conflicting rows for {file_hash!r}")
            masks[file_hash] = mask
    if d is None:
        raise InputError(f"{path}: no verdict rows")
    return VerdictMatrix(d=d, masks=masks)


def write_verdicts(verdicts: VerdictMatrix, path: str) -> None:
    with open(path, "w") as fh:
        for h in sorted(verdicts.masks):
            fh.write(f"{h}\t{verdicts.d}\t{format(verdicts.masks[h], 'x')}\n")


def read_observations(path: str) -> list[PldFileProfile]:
    """Load observation TSV: pld<TAB>file_hash<TAB>count (rows accumulate)."""
    counts: dict[str, dict[str, int]] = {}
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise InputError(f"{path}:{lineno}: expected 3 fields, got {len(parts)}")
            pld, file_hash, count_str = parts
            try:
                count = int(count_str)
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from None
            if count < 1:
                raise InputError(f"{path}:{lineno}: count must be >= 1")
            bucket = counts.setdefault(pld, {})
            bucket[file_hash] = bucket.get(file_hash, 0) + count
    return [PldFileProfile(pld=pld, files=counts[pld]) for pld in sorted(counts)]


def write_observations(profiles: Iterable[PldFileProfile], path: str) -> None:
    with open(path, "w") as fh:
        for prof in sorted(profiles, key=lambda p: p.pld):
            for h in sorted(prof.files):
                fh.write(f"{prof.pld}\t{h}\t{prof.files[h]}\n")


def write_reputation(rows: Iterable[PldReputation], path: str) -> None:
    """Write score rows: pld, dichotomy, r_bar, N, TF, H."""
    with open(path, "w") as fh:
        for r in rows:
            fh.write(f"{r.pld}\t{r.dichotomy}\t{repr(float(r.r_bar))}\t"
                     f"{r.n_unique}\t{r.total}\t{repr(float(r.entropy))}\n")


def read_reputation(path: str) -> list[PldReputation]:
    rows = []
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 6:
                raise InputError(f"{path}:{lineno}: expected 6 fields, got {len(parts)}")
            if parts[1] not in ("clean", "malicious"):
                raise InputError(f"{path}:{lineno}: bad dichotomy {parts[1]!r}")
            rows.append(PldReputation(
                pld=parts[0], dichotomy=parts[1], r_bar=float(parts[2]),
                n_unique=int(parts[3]), total=int(parts[4]),
                entropy=float(parts[5])))
    return rows


def malicious_file_sets(profiles: Iterable[PldFileProfile],
                        verdicts: VerdictMatrix,
                        tau: float = 0.0) -> dict[str, set[str]]:
    """Per-PLD sets of hosted malicious files; clean PLDs are dropped.

    Feeds the co-occurrence builder, which expects non-empty sets only.
    """
    _check_tau(tau)
    out: dict[str, set[str]] = {}
    for prof in profiles:
        bad = {h for h in prof.files if verdicts.binary(h, tau)}
        if bad:
            out[prof.pld] = bad
    return out
