"""Pipeline configuration and the per-stage drivers used by the CLI."""
from __future__ import annotations

import json
import logging
import re
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from recordgraph.checkpoint import Checkpoint, TrainConfig, load_checkpoint
from recordgraph.corpus import load_documents, split_chunks
from recordgraph.inference import EmbeddingCache, summarize, summary_record
from recordgraph.objective import LossConfig
from recordgraph.providers import EmbeddingProvider, LlmClient, ProviderError, TokenEmbedder
from recordgraph.records import GraphFormatError, build_graph, load_graph, save_graph
from recordgraph.rouge import evaluate
from recordgraph.seeding import config_hash, derive_seed
from recordgraph.simscore import load_rankings, precompute_rankings, save_rankings
from recordgraph.trainer import (
    DATASET_PRESETS,
    GLOBAL_QUERY,
    supervised_rankings,
    train,
    train_config_hash,
    write_trace,
)

log = logging.getLogger(__name__)


class ProvenanceError(RuntimeError):
    """Artifacts were produced under a different configuration."""


@dataclass
class ProviderConfig:
    embedding_mode: str = "deterministic"
    llm_mode: str = "canned"
    dimension: int = 768
    token_dim: int = 768
    llm_model: str = "meta-llama/Llama-2-7b-chat-hf"
    sim_model: str | None = None
    embed_model: str = "facebook/contriever"
    token_model: str = "bert-base-uncased"
    retries: int = 3
    timeout: float = 120.0


@dataclass
class PipelineConfig:
    dataset: str = ""
    out_dir: str = "runs/default"
    seed: int = 0
    chunk_size: int = 256
    overlap: int = 32
    n_queries: int = 30
    k: int = 6
    sim_temperature: float = 0.5
    rank_component: str = "f1"
    checkpoint_every: int = 0
    providers: ProviderConfig = field(default_factory=ProviderConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        preset = d.pop("preset", None)
        providers = ProviderConfig(**d.pop("providers", {}))
        train_d = d.pop("train", {})
        cfg = cls(providers=providers, train=TrainConfig.from_dict(train_d), **d)
        if preset:
            cfg = cfg.with_preset(preset)
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return asdict(self)

    def with_preset(self, name: str) -> "PipelineConfig":
        try:
            p = DATASET_PRESETS[name.lower()]
        except KeyError:
            raise ValueError(f"unknown preset {name!r}; choose from {sorted(DATASET_PRESETS)}") from None
        loss = replace(self.train.loss, alpha=p["alpha"])
        return replace(self, train=replace(self.train, dropout=p["dropout"], loss=loss))

    def with_seed(self, seed: int) -> "PipelineConfig":
        return replace(self, seed=seed, train=replace(self.train, seed=seed))

    @property
    def build_hash(self) -> str:
        keys = ("seed", "chunk_size", "overlap", "n_queries", "k", "sim_temperature", "rank_component")
        return config_hash({"build": {k: getattr(self, k) for k in keys}, "providers": asdict(self.providers)})

    @property
    def out(self) -> Path:
        return Path(self.out_dir)


def _train_overrides() -> set[str]:
    return {f.name for f in fields(TrainConfig)} - {"loss"}


def apply_overrides(cfg: PipelineConfig, overrides: dict) -> PipelineConfig:
    """Apply flat ``name -> value`` overrides, skipping ``None`` values."""
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if "preset" in overrides:
        cfg = cfg.with_preset(overrides.pop("preset"))
    if "seed" in overrides:
        cfg = cfg.with_seed(overrides.pop("seed"))
    top, train_kw, loss_kw, prov_kw = {}, {}, {}, {}
    loss_names = {f.name for f in fields(LossConfig)}
    prov_names = {f.name for f in fields(ProviderConfig)}
    for k, v in overrides.items():
        if k in _train_overrides():
            train_kw[k] = v
        elif k in loss_names:
            loss_kw[k] = v
        elif k in prov_names:
            prov_kw[k] = v
        else:
            top[k] = v
    train = replace(cfg.train, loss=replace(cfg.train.loss, **loss_kw), **train_kw)
    return replace(cfg, providers=replace(cfg.providers, **prov_kw), train=train, **top)


def safe_name(doc_id: str) -> str:
    name = re.sub(r"[^A-Za-z0-9_.-]", "_", doc_id)
    if name != doc_id:
        name += "-" + config_hash(doc_id)[:8]
    return name


def make_providers(cfg: PipelineConfig) -> tuple[EmbeddingProvider, TokenEmbedder, LlmClient]:
    p = cfg.providers
    emb = EmbeddingProvider(p.dimension, p.embedding_mode, query_model=p.embed_model,
                            context_model=p.embed_model, retries=p.retries, timeout=p.timeout)
    tok = TokenEmbedder(p.token_dim, p.embedding_mode, model=p.token_model, retries=p.retries, timeout=p.timeout)
    llm = LlmClient(p.llm_mode, model=p.llm_model, cache_path=cfg.out / "llm_cache.jsonl",
                    retries=p.retries, timeout=p.timeout)
    return emb, tok, llm


def graph_path(cfg: PipelineConfig, doc_id: str) -> Path:
    return cfg.out / "graphs" / f"{safe_name(doc_id)}.graph.json"


def rankings_path(cfg: PipelineConfig, doc_id: str) -> Path:
    return cfg.out / "rankings" / f"{safe_name(doc_id)}.rankings.json"


def _existing_ok(cfg: PipelineConfig, doc_id: str) -> bool:
    gp, rp = graph_path(cfg, doc_id), rankings_path(cfg, doc_id)
    if not (gp.exists() and rp.exists()):
        return False
    try:
        g = load_graph(gp)
        rdoc, _, rhash = load_rankings(rp)
    except (GraphFormatError, UnicodeDecodeError, OSError) as exc:
        log.warning("rebuilding %s: %s", doc_id, exc)
        return False
    return g.config_hash == cfg.build_hash and rhash == cfg.build_hash and g.doc_id == rdoc == doc_id


def write_config(cfg: PipelineConfig) -> None:
    cfg.out.mkdir(parents=True, exist_ok=True)
    (cfg.out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")


def run_build(cfg: PipelineConfig, providers=None) -> dict:
    """Build graph and rankings files for every document; skip up-to-date ones."""
    docs = load_documents(cfg.dataset)
    write_config(cfg)
    (cfg.out / "graphs").mkdir(parents=True, exist_ok=True)
    (cfg.out / "rankings").mkdir(parents=True, exist_ok=True)
    emb, tok, llm = providers or make_providers(cfg)
    built, skipped, failed = [], [], {}
    for doc in docs:
        if _existing_ok(cfg, doc.doc_id):
            log.info("%s up to date, skipping", doc.doc_id)
            skipped.append(doc.doc_id)
            continue
        try:
            chunks = split_chunks(doc, cfg.chunk_size, cfg.overlap)
            g = build_graph(chunks, llm, emb, cfg.n_queries, cfg.k,
                            seed=derive_seed(cfg.seed, f"build:{doc.doc_id}"),
                            sim_temperature=cfg.sim_temperature)
            g.config_hash = cfg.build_hash
            rankings = precompute_rankings(g, tok, cfg.rank_component)
        except (ProviderError, RuntimeError, ValueError) as exc:
            log.error("build failed for %s: %s", doc.doc_id, exc)
            failed[doc.doc_id] = str(exc)
            continue
        save_graph(g, graph_path(cfg, doc.doc_id))
        save_rankings(doc.doc_id, rankings, rankings_path(cfg, doc.doc_id), cfg.build_hash)
        built.append(doc.doc_id)
    return {"built": built, "skipped": skipped, "failed": failed}


def load_artifacts(cfg: PipelineConfig, force: bool = False):
    docs = load_documents(cfg.dataset)
    graphs, rankings = [], []
    for doc in docs:
        gp, rp = graph_path(cfg, doc.doc_id), rankings_path(cfg, doc.doc_id)
        if not gp.exists() or not rp.exists():
            raise FileNotFoundError(f"missing build output for {doc.doc_id!r} (expected {gp}); run 'build' first")
        g = load_graph(gp)
        _, r, rhash = load_rankings(rp)
        if not force and (g.config_hash != cfg.build_hash or rhash != cfg.build_hash):
            raise ProvenanceError(
                f"{gp} was built with config {g.config_hash}, current is {cfg.build_hash} (use --force to override)"
            )
        graphs.append(g)
        rankings.append(r)
    return docs, graphs, rankings


def checkpoint_dir(cfg: PipelineConfig) -> Path:
    return cfg.out / "checkpoints"


def final_checkpoint_path(cfg: PipelineConfig) -> Path:
    return checkpoint_dir(cfg) / f"epoch{cfg.train.epochs}.ckpt"


def run_train(cfg: PipelineConfig, force: bool = False, resume: str | Path | None = None, providers=None) -> Checkpoint:
    docs, graphs, rankings = load_artifacts(cfg, force)
    emb, tok, _ = providers or make_providers(cfg)
    if cfg.train.mode == "supervised":
        rankings = [supervised_rankings(g, d, tok) for g, d in zip(graphs, docs)]
    write_config(cfg)
    start = load_checkpoint(resume) if resume else None
    ckpt = train(graphs, rankings, cfg.train, emb, resume=start,
                 checkpoint_dir=checkpoint_dir(cfg), checkpoint_every=cfg.checkpoint_every,
                 provenance=cfg.build_hash)
    write_trace(ckpt.trace, cfg.out / "train_log.jsonl")
    return ckpt


def run_summarize(
    cfg: PipelineConfig,
    checkpoint: str | Path | None = None,
    query: str | None = None,
    k: int | None = None,
    chunks_only: bool = False,
    force: bool = False,
    output: str | Path | None = None,
    providers=None,
) -> list[dict]:
    path = Path(checkpoint) if checkpoint else final_checkpoint_path(cfg)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path} (run 'train' first or pass --checkpoint)")
    ckpt = load_checkpoint(path)
    docs, graphs, _ = load_artifacts(cfg, force)
    if not force and ckpt.config_hash != train_config_hash(ckpt.config, cfg.build_hash):
        raise ProvenanceError(f"{path} was trained on graphs from a different build config (use --force)")
    emb, _, llm = providers or make_providers(cfg)
    cache = EmbeddingCache()
    records = []
    for doc, g in zip(docs, graphs):
        summary, res = summarize(query or GLOBAL_QUERY, g, ckpt.model, llm, emb, k or cfg.k, chunks_only, cache)
        records.append(summary_record(doc.doc_id, summary, res, g, ckpt.model))
    out = Path(output) if output else cfg.out / "summaries.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
    return records


def read_predictions(path: str | Path) -> list[tuple[str, str]]:
    preds = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                preds.append((rec["doc_id"], rec["summary"]))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: prediction records need 'doc_id' and 'summary'") from exc
    if not preds:
        raise ValueError(f"{path}: no prediction records")
    return preds


def run_eval(cfg: PipelineConfig, predictions: str | Path | None = None, output: str | Path | None = None) -> dict:
    docs = load_documents(cfg.dataset)
    preds = read_predictions(predictions or cfg.out / "summaries.jsonl")
    report = evaluate(preds, docs)
    out = Path(output) if output else cfg.out / "eval_report.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


def fixture_config(out_dir: str | Path, dataset: str | Path) -> PipelineConfig:
    """Configuration for the shipped synthetic fixture."""
    from recordgraph.fixtures import FIXTURE_CHUNK_SIZE, FIXTURE_OVERLAP, FIXTURE_PRESET, FIXTURE_QUERIES, FIXTURE_SEED

    cfg = PipelineConfig(dataset=str(dataset), out_dir=str(out_dir), chunk_size=FIXTURE_CHUNK_SIZE,
                         overlap=FIXTURE_OVERLAP, n_queries=FIXTURE_QUERIES)
    return cfg.with_seed(FIXTURE_SEED).with_preset(FIXTURE_PRESET)
