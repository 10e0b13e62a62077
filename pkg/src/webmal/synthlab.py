"""Synthetic data generation: family samplers and planted crawl corpora.

Samplers invert the closed-form CDFs where available; the power law with
exponential cutoff is drawn by rejection from a pure power-law envelope
(acceptance exp(-lambda (x - x_min))), falling back to an exponential
envelope when the exponent is at or below 1 and the power-law proposal does
not exist. All draws are deterministic per seed.

plant_crawl builds a full crawl corpus with known ground truth:

* page counts are planted exactly — every PLD emits a cycle over its own
  pages, so each page appears in at least one edge and the PLD gets one
  self-loop;
* in-degrees are planted exactly up to that structural self-loop (a PLD
  with planted in-degree k has graph in-degree k + 1): k distinct source
  PLDs are drawn per target, weighted by a heavy-tailed out-propensity,
  optionally preferring same-class sources (homophily);
* malicious PLDs receive planted co-occurrence components through shared
  malicious files; all other malicious files are private to one PLD, and
  clean PLDs never host a flagged file, so dichotomies and component
  memberships round-trip exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .dga import DEFAULT_ALPHABET, default_wordlist
from .errors import InfeasibleSpec, InvalidParams
from .heavytail import make_distribution
from .reputation import PldFileProfile, VerdictMatrix


def _sample_trunc_power_law(params: dict[str, float], x_min: float, n: int,
                            rng: np.random.Generator) -> np.ndarray:
    alpha = float(params["alpha"])
    lam = float(params["lambda"])
    if lam <= 0:
        raise InvalidParams("trunc_power_law needs lambda > 0")
    out = np.empty(0)
    # batch rejection; envelope acceptance is evaluated vectorized
    while len(out) < n:
        want = max(n - len(out), 1)
        batch = int(want * 1.5) + 16
        u = rng.random(batch)
        if alpha > 1.0:
            y = x_min * (1.0 - u) ** (-1.0 / (alpha - 1.0))
            accept = rng.random(batch) < np.exp(-lam * (y - x_min))
        else:
            # exponential proposal; accept with (y/x_min)^-alpha <= 1
            y = x_min - np.log1p(-u) / lam
            accept = rng.random(batch) < (y / x_min) ** (-alpha)
        out = np.concatenate([out, y[accept]])
    return out[:n]


def sample(family: str, params: dict[str, float], x_min: float, n: int,
           seed: int) -> np.ndarray:
    """Draw n points from a tail family on [x_min, inf), deterministic per seed."""
    if n < 0:
        raise InvalidParams("n must be nonnegative")
    rng = np.random.default_rng(seed)
    return _sample_with(family, params, x_min, n, rng)


def _sample_with(family: str, params: dict[str, float], x_min: float, n: int,
                 rng: np.random.Generator) -> np.ndarray:
    if family == "trunc_power_law":
        # validate parameters through the distribution constructor first
        make_distribution(family, params, x_min)
        return _sample_trunc_power_law(params, x_min, n, rng)
    dist = make_distribution(family, params, x_min)
    u = rng.random(n)
    return np.asarray(dist.ppf(u), dtype=float)


# ---------------------------------------------------------------------------
# corpus parameters

@dataclass(frozen=True)
class FamilySpec:
    """One tail family with parameters, the unit of planting."""

    family: str
    params: Mapping[str, float]
    x_min: float

    def validate(self) -> None:
        make_distribution(self.family, dict(self.params), self.x_min)

    def to_dict(self) -> dict:
        return {"family": self.family, "params": dict(self.params),
                "x_min": self.x_min}

    @classmethod
    def from_dict(cls, d: dict) -> "FamilySpec":
        return cls(family=d["family"], params=dict(d["params"]),
                   x_min=float(d["x_min"]))


@dataclass(frozen=True)
class ClassPair:
    """Clean/malicious variants of one planted feature."""

    clean: FamilySpec
    malicious: FamilySpec

    def to_dict(self) -> dict:
        return {"clean": self.clean.to_dict(),
                "malicious": self.malicious.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "ClassPair":
        return cls(clean=FamilySpec.from_dict(d["clean"]),
                   malicious=FamilySpec.from_dict(d["malicious"]))


@dataclass(frozen=True)
class SyntheticSpec:
    seed: int
    n_plds: int
    malicious_fraction: float
    pages: ClassPair
    indegree: ClassPair
    files: ClassPair
    out_propensity: FamilySpec
    d: int = 56
    detections: tuple[int, int] = (1, 8)       # flagged engines per bad file
    components: tuple[int, ...] = ()           # planted MDN sizes
    homophily: float = 0.0
    alexa_clean: float = 0.6                   # P(ranked | clean)
    alexa_malicious: float = 0.15
    dga_fraction: float = 0.8                  # of malicious names random
    suffixes: tuple[str, ...] = ("com", "net", "org")
    occurrences: tuple[int, int] = (1, 3)      # file copy count range
    shared_clean_pool: float = 0.1             # P(reuse a pooled clean file)

    @property
    def n_malicious(self) -> int:
        return int(round(self.n_plds * self.malicious_fraction))

    def validate(self) -> None:
        if self.n_plds < 2:
            raise InfeasibleSpec("need at least 2 PLDs")
        if not (0.0 <= self.malicious_fraction <= 1.0):
            raise InfeasibleSpec("malicious_fraction must be in [0,1]")
        if self.d < 1:
            raise InfeasibleSpec("engine count d must be >= 1")
        if not (0.0 <= self.homophily <= 1.0):
            raise InfeasibleSpec("homophily must be in [0,1]")
        for frac in (self.alexa_clean, self.alexa_malicious, self.dga_fraction,
                     self.shared_clean_pool):
            if not (0.0 <= frac <= 1.0):
                raise InfeasibleSpec("fractions must be in [0,1]")
        if any(s < 1 for s in self.components):
            raise InfeasibleSpec("component sizes must be >= 1")
        if sum(self.components) > self.n_malicious:
            raise InfeasibleSpec(
                f"component sizes sum to {sum(self.components)} but only "
                f"{self.n_malicious} malicious PLDs are available")
        lo, hi = self.detections
        if not (1 <= lo <= hi <= self.d):
            raise InfeasibleSpec("detections range must satisfy 1 <= lo <= hi <= d")
        lo, hi = self.occurrences
        if not (1 <= lo <= hi):
            raise InfeasibleSpec("occurrence range must satisfy 1 <= lo <= hi")
        if not self.suffixes:
            raise InfeasibleSpec("need at least one suffix")
        for pair in (self.pages, self.indegree, self.files):
            pair.clean.validate()
            pair.malicious.validate()
        self.out_propensity.validate()

    def to_json(self) -> str:
        payload = {
            "seed": self.seed, "n_plds": self.n_plds,
            "malicious_fraction": self.malicious_fraction,
            "pages": self.pages.to_dict(),
            "indegree": self.indegree.to_dict(),
            "files": self.files.to_dict(),
            "out_propensity": self.out_propensity.to_dict(),
            "d": self.d, "detections": list(self.detections),
            "components": list(self.components),
            "homophily": self.homophily,
            "alexa_clean": self.alexa_clean,
            "alexa_malicious": self.alexa_malicious,
            "dga_fraction": self.dga_fraction,
            "suffixes": list(self.suffixes),
            "occurrences": list(self.occurrences),
            "shared_clean_pool": self.shared_clean_pool,
        }
        return json.dumps(payload, sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SyntheticSpec":
        d = json.loads(text)
        spec = cls(
            seed=int(d["seed"]), n_plds=int(d["n_plds"]),
            malicious_fraction=float(d["malicious_fraction"]),
            pages=ClassPair.from_dict(d["pages"]),
            indegree=ClassPair.from_dict(d["indegree"]),
            files=ClassPair.from_dict(d["files"]),
            out_propensity=FamilySpec.from_dict(d["out_propensity"]),
            d=int(d.get("d", 56)),
            detections=tuple(d.get("detections", (1, 8))),
            components=tuple(d.get("components", ())),
            homophily=float(d.get("homophily", 0.0)),
            alexa_clean=float(d.get("alexa_clean", 0.6)),
            alexa_malicious=float(d.get("alexa_malicious", 0.15)),
            dga_fraction=float(d.get("dga_fraction", 0.8)),
            suffixes=tuple(d.get("suffixes", ("com", "net", "org"))),
            occurrences=tuple(d.get("occurrences", (1, 3))),
            shared_clean_pool=float(d.get("shared_clean_pool", 0.1)),
        )
        spec.validate()
        return spec


def default_spec(seed: int, n_plds: int = 2000, **overrides) -> SyntheticSpec:
    """A paper-flavored spec: clean exponents above malicious ones."""
    base = dict(
        seed=seed, n_plds=n_plds, malicious_fraction=0.05,
        pages=ClassPair(
            clean=FamilySpec("trunc_power_law", {"alpha": 1.99, "lambda": 2e-4}, 4.0),
            malicious=FamilySpec("trunc_power_law", {"alpha": 1.66, "lambda": 2e-4}, 4.0)),
        indegree=ClassPair(
            clean=FamilySpec("trunc_power_law", {"alpha": 2.21, "lambda": 1e-4}, 1.0),
            malicious=FamilySpec("trunc_power_law", {"alpha": 1.61, "lambda": 1e-4}, 1.0)),
        files=ClassPair(
            clean=FamilySpec("exponential", {"lambda": 0.7}, 1.0),
            malicious=FamilySpec("exponential", {"lambda": 0.4}, 1.0)),
        out_propensity=FamilySpec("power_law", {"alpha": 2.2}, 1.0),
        homophily=0.75,
        components=(),
    )
    base.update(overrides)
    spec = SyntheticSpec(**base)
    spec.validate()
    return spec


# ---------------------------------------------------------------------------
# planted crawl

@dataclass
class Corpus:
    """In-memory planted corpus with full ground truth."""

    spec: SyntheticSpec
    plds: list[str]                       # index-aligned with labels
    labels: dict[str, str]                # pld -> "clean" | "malicious"
    edges: list[tuple[str, str]]          # page URL pairs
    profiles: list[PldFileProfile]
    verdicts: VerdictMatrix
    alexa: dict[str, int]
    components: list[list[str]]           # planted MDNs incl. singletons
    planted_pages: dict[str, int]
    planted_indegree: dict[str, int]
    psl_text: str = "// synthetic suffix rules\ncom\nnet\norg\n"


def _draw_ints(fs: FamilySpec, n: int, rng: np.random.Generator,
               cap: int | None = None) -> np.ndarray:
    raw = _sample_with(fs.family, dict(fs.params), fs.x_min, n, rng)
    vals = np.maximum(1, np.rint(raw)).astype(np.int64)
    if cap is not None:
        vals = np.minimum(vals, cap)
    return vals


def _unique_names(spec: SyntheticSpec, is_mal: np.ndarray,
                  rng: np.random.Generator) -> list[str]:
    words = default_wordlist()
    alphabet = list(DEFAULT_ALPHABET)
    names: list[str] = []
    seen: set[str] = set()
    for i in range(spec.n_plds):
        suffix = spec.suffixes[int(rng.integers(0, len(spec.suffixes)))]
        while True:
            if is_mal[i] and rng.random() < spec.dga_fraction:
                label = "".join(rng.choice(alphabet, size=12))
            elif rng.random() < 0.5:
                label = words[int(rng.integers(0, len(words)))]
            else:
                label = (words[int(rng.integers(0, len(words)))]
                         + words[int(rng.integers(0, len(words)))])
            name = f"{label}.{suffix}"
            if name not in seen:
                seen.add(name)
                names.append(name)
                break
    return names


def _distinct_weighted(rng: np.random.Generator, pool: np.ndarray,
                       cumw: np.ndarray, k: int, forbidden: set[int],
                       chosen: set[int]) -> list[int]:
    """Draw k distinct ids from pool (weights via cumw), skipping forbidden.

    Rejection over a precomputed cumulative-weight table; falls back to a
    scan of the remaining ids if rejection stalls on a concentrated pool.
    """
    out: list[int] = []
    if k <= 0 or len(pool) == 0:
        return out
    total = cumw[-1]
    for _ in range(64):
        need = k - len(out)
        if need <= 0:
            return out
        u = rng.random(2 * need + 4) * total
        picks = np.searchsorted(cumw, u, side="right")
        for j in picks:
            pid = int(pool[j])
            if pid in forbidden or pid in chosen:
                continue
            chosen.add(pid)
            out.append(pid)
            if len(out) == k:
                return out
    rest = [int(p) for p in pool if p not in forbidden and p not in chosen]
    rest = [rest[i] for i in rng.permutation(len(rest))]
    for pid in rest[:k - len(out)]:
        chosen.add(pid)
        out.append(pid)
    return out


def plant_crawl(spec: SyntheticSpec) -> Corpus:
    """Generate a crawl corpus with exact planted ground truth."""
    spec.validate()
    n = spec.n_plds
    n_mal = spec.n_malicious

    rng_cls = np.random.default_rng([spec.seed, 1])
    rng_names = np.random.default_rng([spec.seed, 2])
    rng_pages = np.random.default_rng([spec.seed, 3])
    rng_deg = np.random.default_rng([spec.seed, 4])
    rng_edges = np.random.default_rng([spec.seed, 5])
    rng_files = np.random.default_rng([spec.seed, 6])
    rng_verd = np.random.default_rng([spec.seed, 7])
    rng_alexa = np.random.default_rng([spec.seed, 8])

    is_mal = np.zeros(n, dtype=bool)
    if n_mal:
        is_mal[rng_cls.choice(n, size=n_mal, replace=False)] = True
    plds = _unique_names(spec, is_mal, rng_names)
    labels = {plds[i]: ("malicious" if is_mal[i] else "clean") for i in range(n)}
    mal_idx = np.flatnonzero(is_mal)
    clean_idx = np.flatnonzero(~is_mal)

    # planted per-PLD page and in-degree counts, by class
    pages = np.zeros(n, dtype=np.int64)
    indeg = np.zeros(n, dtype=np.int64)
    if len(clean_idx):
        pages[clean_idx] = _draw_ints(spec.pages.clean, len(clean_idx), rng_pages)
        indeg[clean_idx] = _draw_ints(spec.indegree.clean, len(clean_idx),
                                      rng_deg, cap=n - 1)
    if len(mal_idx):
        pages[mal_idx] = _draw_ints(spec.pages.malicious, len(mal_idx), rng_pages)
        indeg[mal_idx] = _draw_ints(spec.indegree.malicious, len(mal_idx),
                                    rng_deg, cap=n - 1)

    # page-cycle skeleton: pins page counts and adds one self-loop per PLD
    edges: list[tuple[str, str]] = []
    for i in range(n):
        host = plds[i]
        c = int(pages[i])
        if c == 1:
            edges.append((f"http://{host}/p0", f"http://{host}/p0"))
        else:
            for j in range(c):
                edges.append((f"http://{host}/p{j}", f"http://{host}/p{(j + 1) % c}"))

    # inter-PLD links: k distinct sources per target, propensity-weighted,
    # homophilous draws pick the source from the target's own class pool
    prop = np.asarray(_sample_with(spec.out_propensity.family,
                                   dict(spec.out_propensity.params),
                                   spec.out_propensity.x_min, n, rng_edges))
    pool_all = np.arange(n)
    cum_all = np.cumsum(prop)
    pools = {}
    for tag, idx in (("clean", clean_idx), ("malicious", mal_idx)):
        pools[tag] = (idx, np.cumsum(prop[idx])) if len(idx) else (idx, None)
    for i in range(n):
        k = int(indeg[i])
        if k <= 0:
            continue
        cls = "malicious" if is_mal[i] else "clean"
        same_pool, same_cum = pools[cls]
        k_same = int(rng_edges.binomial(k, spec.homophily)) if spec.homophily else 0
        k_same = min(k_same, max(len(same_pool) - 1, 0))
        chosen: set[int] = set()
        srcs = _distinct_weighted(rng_edges, same_pool, same_cum, k_same,
                                  {i}, chosen) if k_same else []
        srcs += _distinct_weighted(rng_edges, pool_all, cum_all, k - len(srcs),
                                   {i}, chosen)
        dst = f"http://{plds[i]}/p0"
        for s in srcs:
            edges.append((f"http://{plds[s]}/p0", dst))

    # files: component-shared malicious files pin the MDNs; every other
    # malicious file is private to its PLD; clean PLDs host only clean files
    n_files = np.zeros(n, dtype=np.int64)
    if len(clean_idx):
        n_files[clean_idx] = _draw_ints(spec.files.clean, len(clean_idx), rng_files)
    if len(mal_idx):
        n_files[mal_idx] = _draw_ints(spec.files.malicious, len(mal_idx), rng_files)

    mal_order = mal_idx[rng_files.permutation(len(mal_idx))] if len(mal_idx) else mal_idx
    comp_of = {}
    components: list[list[str]] = []
    pos = 0
    for size in spec.components:
        members = mal_order[pos:pos + size]
        comp_id = len(components)
        components.append(sorted(plds[j] for j in members))
        for j in members:
            comp_of[int(j)] = comp_id
        pos += size
    for j in mal_order[pos:]:                      # leftover -> singletons
        comp_of[int(j)] = len(components)
        components.append([plds[int(j)]])

    file_counter = 0
    clean_pool: list[str] = []
    mal_masks: dict[str, int] = {}
    clean_hashes: set[str] = set()
    profiles: list[PldFileProfile] = []
    occ_lo, occ_hi = spec.occurrences
    det_lo, det_hi = spec.detections

    def fresh_hash() -> str:
        nonlocal file_counter
        h = f"f{file_counter:08d}"
        file_counter += 1
        return h

    def mal_mask() -> int:
        ndet = int(rng_verd.integers(det_lo, det_hi + 1))
        bits = rng_verd.choice(spec.d, size=min(ndet, spec.d), replace=False)
        mask = 0
        for b in bits:
            mask |= 1 << int(b)
        return mask

    comp_file: dict[int, str] = {}
    for i in range(n):
        files: dict[str, int] = {}

        def add(h: str) -> None:
            files[h] = files.get(h, 0) + int(rng_files.integers(occ_lo, occ_hi + 1))

        slots = int(n_files[i])
        if is_mal[i]:
            cid = comp_of[int(i)]
            if len(components[cid]) > 1:
                if cid not in comp_file:
                    comp_file[cid] = fresh_hash()
                    mal_masks[comp_file[cid]] = mal_mask()
                add(comp_file[cid])
            else:
                h = fresh_hash()
                mal_masks[h] = mal_mask()
                add(h)
            slots -= 1
        for _ in range(max(slots, 0)):
            if is_mal[i] and rng_files.random() < 0.2:
                h = fresh_hash()          # extra private malicious file
                mal_masks[h] = mal_mask()
            elif clean_pool and rng_files.random() < spec.shared_clean_pool:
                h = clean_pool[int(rng_files.integers(0, len(clean_pool)))]
            else:
                h = fresh_hash()
                clean_hashes.add(h)
                if len(clean_pool) < 64:
                    clean_pool.append(h)
            add(h)
        profiles.append(PldFileProfile(pld=plds[i], files=files))

    masks = {h: 0 for h in clean_hashes}
    masks.update(mal_masks)
    verdicts = VerdictMatrix(d=spec.d, masks=masks)

    # alexa ranks: class-dependent coverage, ranks are a permutation
    ranked = [plds[i] for i in range(n)
              if rng_alexa.random() < (spec.alexa_malicious if is_mal[i]
                                       else spec.alexa_clean)]
    ranks = rng_alexa.permutation(len(ranked)) + 1
    alexa = {pld: int(r) for pld, r in zip(ranked, ranks)}

    components = sorted(components, key=lambda m: (-len(m), m[0]))
    return Corpus(spec=spec, plds=plds, labels=labels, edges=edges,
                  profiles=profiles, verdicts=verdicts, alexa=alexa,
                  components=components,
                  planted_pages={plds[i]: int(pages[i]) for i in range(n)},
                  planted_indegree={plds[i]: int(indeg[i]) for i in range(n)})


# ---------------------------------------------------------------------------
# corpus serialization

def write_corpus(corpus: Corpus, out_dir: str) -> dict[str, str]:
    """Write the corpus in the pipeline's ingestion formats; returns paths."""
    import os

    from .reputation import write_observations, write_verdicts

    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, fname) for name, fname in [
        ("edges", "edges.tsv"), ("observations", "observations.tsv"),
        ("verdicts", "verdicts.tsv"), ("alexa", "alexa.tsv"),
        ("labels", "labels.tsv"), ("psl", "psl.dat"), ("truth", "truth.json"),
        ("spec", "spec.json")]}

    with open(paths["edges"], "w") as fh:
        for src, dst in corpus.edges:
            fh.write(f"{src}\t{dst}\n")
    write_observations(corpus.profiles, paths["observations"])
    write_verdicts(corpus.verdicts, paths["verdicts"])
    with open(paths["alexa"], "w") as fh:
        for pld in sorted(corpus.alexa):
            fh.write(f"{pld}\t{corpus.alexa[pld]}\n")
    with open(paths["labels"], "w") as fh:
        for pld in sorted(corpus.labels):
            fh.write(f"{pld}\t{corpus.labels[pld]}\n")
    with open(paths["psl"], "w") as fh:
        fh.write("// synthetic suffix rules\n")
        for s in corpus.spec.suffixes:
            fh.write(s + "\n")
    truth = {
        "seed": corpus.spec.seed,
        "n_plds": corpus.spec.n_plds,
        "n_malicious": corpus.spec.n_malicious,
        "components": corpus.components,
        "planted_pages": corpus.planted_pages,
        "planted_indegree": corpus.planted_indegree,
        "pages": corpus.spec.pages.to_dict(),
        "indegree": corpus.spec.indegree.to_dict(),
    }
    with open(paths["truth"], "w") as fh:
        json.dump(truth, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
    with open(paths["spec"], "w") as fh:
        fh.write(corpus.spec.to_json())
    return paths


def read_labels(path: str) -> dict[str, str]:
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line:
                pld, label = line.split("\t")
                out[pld] = label
    return out
