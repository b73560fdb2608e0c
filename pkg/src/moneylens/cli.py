"""Command-line entry points: corpus builds, model training, suggestions,
crowd aggregation, log evaluation, and the HTTP server."""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import crowd as crowdmod
from . import evaluation, ranking
from .embedding import EmbeddingIndex, HashedNgramProvider, RemoteEmbeddingProvider
from .engine import Engine, EngineConfig
from .familiarity import (
    attach_familiarity,
    load_familiarity_model,
    read_pageviews,
    save_familiarity_model,
)
from .policies import POLICIES
from .references import (
    ReferenceCorpus,
    ingest_dictionary,
    ingest_knowledge_base,
    load_corpus,
    read_dictionary_records,
    read_raw_records,
    save_corpus,
    DEFAULT_EXCLUDED_PROPERTIES,
)


@click.group()
def main() -> None:
    """Dollar-amount perspectives: build, train, suggest, serve."""


def _provider(provider: str, dims: int):
    if provider == "builtin":
        return HashedNgramProvider(dims=dims)
    return RemoteEmbeddingProvider(provider)


def _index(corpus: ReferenceCorpus, provider, cache: str | None) -> EmbeddingIndex:
    if cache and Path(cache).exists():
        index = EmbeddingIndex.load(cache)
        if index.provider_name == provider.name and set(index.ids) == {o.id for o in corpus.objects}:
            return index
    index = EmbeddingIndex.build(corpus, provider)
    if cache:
        index.save(cache)
    return index


def _fail(exc: Exception) -> None:
    raise click.ClickException(str(exc))


@main.command()
@click.option("--kb", type=click.Path(exists=True), help="Raw entity records, one JSON object per line.")
@click.option("--dictionary", type=click.Path(exists=True), help="Curated (phrase, value) records, one JSON object per line.")
@click.option("--exclude-property", "excluded", multiple=True, help="Extra property names to drop (adds to the defaults).")
@click.option("--out", required=True, type=click.Path(), help="Corpus output path.")
def ingest(kb, dictionary, excluded, out) -> None:
    """Build a reference corpus from knowledge-base and dictionary records."""
    try:
        objects = []
        if kb:
            exclusions = tuple(DEFAULT_EXCLUDED_PROPERTIES) + tuple(excluded)
            kb_objects, report = ingest_knowledge_base(read_raw_records(kb), exclusions)
            objects.extend(kb_objects)
            click.echo(report.to_text())
        if dictionary:
            objects.extend(ingest_dictionary(read_dictionary_records(dictionary)))
        corpus = ReferenceCorpus(objects)
        save_corpus(corpus, out)
    except Exception as exc:  # noqa: BLE001
        _fail(exc)
    click.echo(f"wrote {len(corpus)} reference objects to {out}")


@main.command("train-familiarity")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--pageviews", required=True, type=click.Path(exists=True))
@click.option("--provider", default="builtin", show_default=True)
@click.option("--dims", default=256, show_default=True)
@click.option("--embeddings-cache", type=click.Path())
@click.option("--alpha", "--lambda", "alpha", default=1.0, show_default=True, help="Ridge penalty.")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
def train_familiarity(corpus_path, pageviews, provider, dims, embeddings_cache, alpha, seed, out) -> None:
    """Fit the pageview ridge model and save it."""
    try:
        corpus = load_corpus(corpus_path)
        prov = _provider(provider, dims)
        index = _index(corpus, prov, embeddings_cache)
        records = read_pageviews(pageviews)
        _, model = attach_familiarity(corpus, records, index, alpha=alpha, seed=seed)
        save_familiarity_model(model, prov.name, out)
    except Exception as exc:  # noqa: BLE001
        _fail(exc)
    click.echo(
        f"familiarity model saved to {out} "
        f"(train R^2 {model.train_r2_:.3f}, held-out R^2 {model.holdout_r2_:.3f})"
    )


@main.command("train-rank")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--training", required=True, type=click.Path(exists=True))
@click.option("--familiarity-model", "familiarity_model", required=True, type=click.Path(exists=True))
@click.option("--provider", default="builtin", show_default=True)
@click.option("--dims", default=256, show_default=True)
@click.option("--embeddings-cache", type=click.Path())
@click.option("--variant", default="V2", show_default=True, type=click.Choice(ranking.VARIANTS))
@click.option("--passes", default=50, show_default=True)
@click.option("--learning-rate", default=0.05, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--compare", is_flag=True, help="Also report held-out R^2 for all four variants.")
@click.option("--split-seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
def train_rank(
    corpus_path, training, familiarity_model, provider, dims, embeddings_cache,
    variant, passes, learning_rate, seed, compare, split_seed, out,
) -> None:
    """Train the helpfulness ranker from labeled examples and save it."""
    try:
        corpus = load_corpus(corpus_path)
        prov = _provider(provider, dims)
        index = _index(corpus, prov, embeddings_cache)
        fam_model, fam_provider = load_familiarity_model(familiarity_model)
        if fam_provider != prov.name:
            raise ValueError(
                f"familiarity model was built with provider {fam_provider!r}, not {prov.name!r}"
            )
        from .familiarity import apply_familiarity

        familiarity = apply_familiarity(corpus, index, fam_model)
        examples = ranking.read_training_examples(training)
        if compare:
            comparison = ranking.compare_variants(
                examples, corpus, index, familiarity, prov,
                split_seed=split_seed, passes=passes, learning_rate=learning_rate, seed=seed,
            )
            click.echo(comparison.to_text())
        model = ranking.train(
            examples, corpus, index, familiarity, prov,
            variant=variant, passes=passes, learning_rate=learning_rate, seed=seed,
        )
        ranking.save_ranker(model, prov.name, out)
    except Exception as exc:  # noqa: BLE001
        _fail(exc)
    click.echo(f"helpfulness model ({variant}) saved to {out}")


_ENGINE_OPTIONS = [
    click.option("--config", "config_path", type=click.Path(exists=True), help="Engine config file."),
    click.option("--corpus", "corpus_path", type=click.Path(exists=True)),
    click.option("--crowd-corpus", "crowd_corpus_path", type=click.Path(exists=True)),
    click.option("--rank-model", "rank_model_path", type=click.Path(exists=True)),
    click.option("--familiarity-model", "familiarity_model_path", type=click.Path(exists=True)),
    click.option("--embeddings-cache", "embeddings_cache_path", type=click.Path()),
    click.option("--provider", "embedding_provider", default=None),
    click.option("--population", type=int, default=None),
    click.option("--prefilter-k", type=int, default=None),
]


def _engine_options(fn):
    for option in reversed(_ENGINE_OPTIONS):
        fn = option(fn)
    return fn


def _build_engine(config_path, **overrides) -> Engine:
    if config_path:
        config = EngineConfig.from_file(config_path, **overrides)
    else:
        config = EngineConfig(**{k: v for k, v in overrides.items() if v is not None})
    return Engine(config)


@main.command()
@click.option("--text", required=True, help="Text to scan for dollar amounts.")
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
@_engine_options
def suggest(text, as_json, config_path, **overrides) -> None:
    """Print suggestion bundles for every dollar amount in --text."""
    try:
        engine = _build_engine(config_path, **overrides)
        results = engine.suggest(text)
    except Exception as exc:  # noqa: BLE001
        _fail(exc)
    if as_json:
        payload = []
        for s in results:
            payload.append(
                {
                    "raw": s.measurement.raw,
                    "value": format(s.measurement.value, "f"),
                    "span": [s.measurement.span.start, s.measurement.span.end],
                    "options": [
                        {"policy": p.policy, "phrase": p.phrase, "score": p.score}
                        for p in s.bundle.options
                    ],
                    "warnings": [str(f) for f in s.failures],
                }
            )
        click.echo(json.dumps(payload, indent=2))
        return
    if not results:
        click.echo("no dollar amounts found")
        return
    for s in results:
        m = s.measurement
        click.echo(f"{m.raw}  [chars {m.span.start}..{m.span.end}, value {format(m.value, 'f')}]")
        for p in s.bundle.options:
            score = f"  (score {p.score:.2f})" if p.score is not None else ""
            click.echo(f"  {p.policy:<13} {p.phrase}{score}")
        for f in s.failures:
            click.echo(f"  {f.policy:<13} unavailable: {f.message}", err=True)


@main.command("crowd-build")
@click.option("--proposals", required=True, type=click.Path(exists=True))
@click.option("--ratings", required=True, type=click.Path(exists=True))
@click.option("--verifications", required=True, type=click.Path(exists=True))
@click.option("--helpfulness-weight", default=0.5, show_default=True)
@click.option("--out", required=True, type=click.Path(), help="Verified crowd corpus output path.")
def crowd_build(proposals, ratings, verifications, helpfulness_weight, out) -> None:
    """Aggregate crowd records into a verified reference corpus."""
    try:
        objects, report = crowdmod.build_crowd_corpus(
            crowdmod.read_proposals(proposals),
            crowdmod.read_ratings(ratings),
            crowdmod.read_verifications(verifications),
            helpfulness_weight=helpfulness_weight,
        )
        corpus = crowdmod.CrowdCorpus.from_crowd_objects(objects)
        corpus.save(out)
    except Exception as exc:  # noqa: BLE001
        _fail(exc)
    click.echo(report.to_text())
    click.echo(f"wrote {len(corpus)} verified crowd references to {out}")


@main.command("eval")
@click.option("--log", "log_path", required=True, type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
def eval_log(log_path, as_json) -> None:
    """Keep-rate and policy-combination reports for a selection log."""
    try:
        log = evaluation.read_trial_log(log_path)
        report = evaluation.keep_rates(log)
        combos = []
        from itertools import combinations

        for size in range(len(POLICIES) + 1):
            for subset in combinations(POLICIES, size):
                combos.append(evaluation.combination_keep_rate(log, subset))
    except Exception as exc:  # noqa: BLE001
        _fail(exc)
    if as_json:
        click.echo(
            json.dumps(
                {
                    "keep_rates": report.to_dict(),
                    "combinations": [c.to_dict() for c in combos],
                },
                indent=2,
            )
        )
        return
    click.echo(report.to_text())
    click.echo("")
    click.echo(evaluation.COUNTERFACTUAL_NOTE)
    for combo in combos:
        click.echo(combo.to_text())


@main.command()
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.option("--selection-log", "selection_log_path", type=click.Path(), default=None)
@_engine_options
def serve(host, port, selection_log_path, config_path, **overrides) -> None:
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    if selection_log_path is not None:
        overrides["selection_log_path"] = selection_log_path
    try:
        engine = _build_engine(config_path, **overrides)
        app = create_app(engine)
    except Exception as exc:  # noqa: BLE001
        _fail(exc)
    uvicorn.run(
        app,
        host=host or engine.config.listen_host,
        port=port or engine.config.listen_port,
    )


if __name__ == "__main__":
    sys.exit(main())
