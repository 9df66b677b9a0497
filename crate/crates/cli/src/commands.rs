//! Subcommand bodies. Each returns its JSON result plus a stdout table.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{Display, Write as _};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use oa_core::cascade::{evaluate, render_metrics_table, topic_templates, EvalCase, EvalInputs, Recommender};
use oa_core::cf::{fit_als, fit_bpr, fit_per_topic, CfMethod, CfParams, Interaction, InteractionMatrix};
use oa_core::config::{Config, ProviderKind};
use oa_core::corpus::{build_dtm, ingest, parse_entry_lines, Corpus, DocKind, Stoplist, DEFAULT_CUSTOM_STOPLIST};
use oa_core::delphi::{run_to_convergence, DelphiState, ExpertActions, RoundRatings, Scripted, TopicProposal};
use oa_core::embedding::{build_store, EmbeddingError, EmbeddingProvider, HashedTfIdf, RemoteProvider};
use oa_core::events::{interactions_from_events, EventLog};
use oa_core::generation::{
    assemble, generate, optimize_tokens, prompt_clusters, GenError, PromptSources, TokenCounter, DEFAULT_ROLE,
};
use oa_core::parser::{autofill, extract_tech_keywords, parse_oa, template_blanks, KeywordConfig, KeywordDoc};
use oa_core::topicmodel::{coherence_score, fit_lda, lda_grid, perplexity_score, select_k, LdaParams};
use oa_core::valuation::{admit_templates, read_signals, read_templates, score_all, TemplateRecord};
use oa_service::layout::model_file_name;
use oa_service::{backend_from_config, serve, DataDir, Stores};
use serde::de::DeserializeOwned;
use serde_json::json;

use crate::{CliError, Command, Common, MethodArg, Output};

fn data(e: impl Display) -> CliError {
    CliError::Data(e.to_string())
}

fn io_err(path: &Path, e: impl Display) -> CliError {
    CliError::Backend(format!("{}: {e}", path.display()))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    match File::open(path) {
        Ok(f) => Ok(BufReader::new(f)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Err(CliError::Data(format!("{}: file not found", path.display())))
        }
        Err(e) => Err(io_err(path, e)),
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    let mut body = String::new();
    std::io::Read::read_to_string(&mut open(path)?, &mut body).map_err(|e| io_err(path, e))?;
    Ok(body)
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| data(format!("{}:{}: {e}", path.display(), i + 1)))?);
    }
    Ok(out)
}

fn to_json(value: impl serde::Serialize) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(value).map_err(|e| CliError::Backend(e.to_string()))
}

fn write_jsonl<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut body = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut body, r).map_err(|e| CliError::Backend(e.to_string()))?;
        body.push(b'\n');
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    let mut f = File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(&body).and_then(|_| f.sync_all()).map_err(|e| io_err(path, e))
}

pub fn load_config(common: &Common) -> Result<Config, CliError> {
    if let Some(p) = &common.config {
        if !p.exists() {
            return Err(CliError::Data(format!("{}: file not found", p.display())));
        }
    }
    let mut config = Config::load(common.config.as_deref()).map_err(data)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
        config.cf.als.seed = seed;
        config.cf.bpr.seed = seed;
    }
    if let Some(dir) = &common.data_dir {
        config.service.data_dir = dir.display().to_string();
    }
    Ok(config)
}

pub fn dispatch(command: &Command, config: Config) -> Result<Option<Output>, CliError> {
    let out = match command {
        Command::Ingest { input, stoplist } => ingest_cmd(&config, input, stoplist.as_deref())?,
        Command::LdaFit { input, k, iterations, stoplist } => lda_fit(&config, input, *k, *iterations, stoplist.as_deref())?,
        Command::LdaGrid { input, k, iterations, stoplist } => lda_grid_cmd(&config, input, k, *iterations, stoplist.as_deref())?,
        Command::DelphiRun { topics, ratings, actions, max_rounds } => {
            delphi_run(&config, topics, ratings, actions.as_deref(), *max_rounds)?
        }
        Command::ValueScore { signals } => value_score(&config, signals)?,
        Command::BuildTemplates { signals, corpus } => build_templates(&config, signals, corpus)?,
        Command::EmbedStore { corpus } => embed_store(&config, corpus)?,
        Command::CfTrain { interactions, method } => cf_train(&config, interactions.as_deref(), *method)?,
        Command::Recommend { oa, user, k, w } => recommend(&config, oa, user, *k, *w)?,
        Command::Evaluate { cases, interactions, k, w } => evaluate_cmd(&config, cases, interactions, *k, *w)?,
        Command::ParseOa { oa, claims, prior } => parse_oa_cmd(&config, oa, claims.as_deref(), prior)?,
        Command::Generate { draft, oa, template, budget } => generate_cmd(&config, draft, oa.as_deref(), template, *budget)?,
        Command::Serve { bind } => {
            serve_cmd(config, bind.clone())?;
            return Ok(None);
        }
    };
    Ok(Some(out))
}

fn data_dir(config: &Config) -> DataDir {
    DataDir::new(&config.service.data_dir)
}

fn load_corpus(path: &Path) -> Result<Corpus, CliError> {
    open(path)?;
    let (corpus, report) = ingest(path).map_err(data)?;
    for r in &report.rejected {
        log::warn!("{}:{}: {}", path.display(), r.line, r.reason);
    }
    Ok(corpus)
}

fn stoplist(path: Option<&Path>) -> Result<Stoplist, CliError> {
    match path {
        Some(p) => {
            let extra = parse_entry_lines(&read_text(p)?);
            Ok(Stoplist::with_custom(DEFAULT_CUSTOM_STOPLIST.iter().map(|s| s.to_string()).chain(extra)))
        }
        None => Ok(Stoplist::standard()),
    }
}

fn ingest_cmd(config: &Config, input: &Path, stop: Option<&Path>) -> Result<Output, CliError> {
    open(input)?;
    let (corpus, report) = ingest(input).map_err(data)?;
    let mut kinds: BTreeMap<String, usize> = BTreeMap::new();
    for d in corpus.documents() {
        *kinds.entry(d.kind.to_string()).or_default() += 1;
    }
    let tokens = corpus.tokenize(&stoplist(stop)?);
    let (vocabulary, total) = match build_dtm(&tokens, config.lda.min_count) {
        Ok(dtm) => (dtm.vocabulary().len(), dtm.total_tokens()),
        Err(_) => (0, 0),
    };
    let mut table = format!("{:<12}{:>10}\n", "kind", "documents");
    for (k, n) in &kinds {
        let _ = writeln!(table, "{k:<12}{n:>10}");
    }
    let _ = writeln!(table, "rejected lines: {}, vocabulary: {vocabulary}, tokens: {total}", report.rejected.len());
    Ok(Output {
        json: json!({
            "accepted": report.accepted,
            "rejected": report.rejected,
            "kinds": kinds,
            "vocabulary": vocabulary,
            "tokens": total,
        }),
        table,
    })
}

fn lda_base(config: &Config, iterations: Option<usize>) -> LdaParams {
    LdaParams {
        k: 1,
        alpha: config.lda.alpha,
        eta: config.lda.eta,
        iterations: iterations.unwrap_or(config.lda.iterations),
        seed: config.seed,
    }
}

fn dtm_of(config: &Config, input: &Path, stop: Option<&Path>) -> Result<oa_core::corpus::DocumentTermMatrix, CliError> {
    let corpus = load_corpus(input)?;
    build_dtm(&corpus.tokenize(&stoplist(stop)?), config.lda.min_count).map_err(data)
}

fn lda_fit(config: &Config, input: &Path, k: usize, iterations: Option<usize>, stop: Option<&Path>) -> Result<Output, CliError> {
    let dtm = dtm_of(config, input, stop)?;
    let params = LdaParams { k, ..lda_base(config, iterations) };
    let model = fit_lda(&dtm, &params).map_err(data)?;
    let perplexity = perplexity_score(&model, &dtm).map_err(data)?;
    let coherence = coherence_score(&model, &dtm, config.lda.top_n).map_err(data)?;
    let mut top_words = Vec::with_capacity(k);
    let mut table = format!("{:<7}top words\n", "topic");
    for t in 0..k {
        let words: Vec<String> = model.top_words(t, config.lda.top_n).map_err(data)?.into_iter().map(|(w, _)| w).collect();
        let _ = writeln!(table, "{t:<7}{}", words.join(" "));
        top_words.push(words);
    }
    let _ = writeln!(table, "perplexity score {perplexity:.4}, coherence score {coherence:.4}");
    Ok(Output {
        json: json!({
            "model": model.export(),
            "perplexity_score": perplexity,
            "coherence_score": coherence,
            "top_words": top_words,
        }),
        table,
    })
}

fn lda_grid_cmd(
    config: &Config,
    input: &Path,
    ks: &[usize],
    iterations: Option<usize>,
    stop: Option<&Path>,
) -> Result<Output, CliError> {
    let ks = if ks.is_empty() { config.lda.grid.clone() } else { ks.to_vec() };
    let dtm = dtm_of(config, input, stop)?;
    let grid = lda_grid(&dtm, &ks, &lda_base(config, iterations), config.lda.top_n).map_err(data)?;
    let selected = select_k(&grid);
    let mut table = format!("{:>6}{:>20}{:>20}\n", "K", "perplexity score", "coherence score");
    for g in &grid {
        let mark = if Some(g.k) == selected { " *" } else { "" };
        let _ = writeln!(table, "{:>6}{:>20.4}{:>20.4}{mark}", g.k, g.perplexity_score, g.coherence_score);
    }
    Ok(Output { json: json!({ "grid": grid, "selected_k": selected }), table })
}

fn delphi_run(
    config: &Config,
    topics: &Path,
    ratings: &Path,
    actions: Option<&Path>,
    max_rounds: Option<usize>,
) -> Result<Output, CliError> {
    let proposals: Vec<TopicProposal> = serde_json::from_str(&read_text(topics)?).map_err(|e| data(format!("{}: {e}", topics.display())))?;
    let rounds: Vec<RoundRatings> = read_jsonl(ratings)?;
    let acts: Vec<ExpertActions> = match actions {
        Some(p) => read_jsonl(p)?,
        None => Vec::new(),
    };
    let state = DelphiState::new(proposals, config.delphi.lambda, config.delphi.theta).map_err(data)?;
    let max_rounds = max_rounds.unwrap_or(config.delphi.max_rounds);
    let outcome = run_to_convergence(state, &mut Scripted(rounds), &mut Scripted(acts), max_rounds).map_err(data)?;
    let mut table = format!("{:>6}{:>10}{:>8}{:>10}  removed\n", "round", "P", "topics", "converged");
    for r in &outcome.state.history {
        let removed: Vec<&str> = r.removals.iter().map(|x| x.topic_id.as_str()).collect();
        let _ = writeln!(table, "{:>6}{:>10.4}{:>8}{:>10}  {}", r.round, r.consensus, r.topics_after, r.converged, removed.join(", "));
    }
    if let Some(w) = &outcome.warning {
        let _ = writeln!(table, "warning: {w}");
    }
    Ok(Output { json: to_json(&outcome)?, table })
}

fn value_score(config: &Config, signals: &Path) -> Result<Output, CliError> {
    let records = read_signals(open(signals)?).map_err(data)?;
    let scored = score_all(&records, &config.valuation).map_err(data)?;
    let threshold = config.valuation.threshold;
    let mut table = format!("{:<20}{:<16}{:>8}  admitted\n", "response", "topic", "total");
    for s in &scored {
        let _ = writeln!(table, "{:<20}{:<16}{:>8.4}  {}", s.response_id, s.topic_id, s.value.total, s.value.total > threshold);
    }
    let admitted: Vec<&str> = scored.iter().filter(|s| s.value.total > threshold).map(|s| s.response_id.as_str()).collect();
    Ok(Output { json: json!({ "threshold": threshold, "scored": scored, "admitted": admitted }), table })
}

fn build_templates(config: &Config, signals: &Path, corpus_path: &Path) -> Result<Output, CliError> {
    let records = read_signals(open(signals)?).map_err(data)?;
    let corpus = load_corpus(corpus_path)?;
    let scored = score_all(&records, &config.valuation).map_err(data)?;
    let (admitted, mut skipped) = admit_templates(&scored, config.valuation.threshold, |s| {
        let doc = corpus.get(&s.response_id).ok_or("response not in corpus")?;
        if doc.kind != DocKind::Response {
            return Err(format!("{} is not a response", doc.kind));
        }
        let oa = doc.pair_id.clone().ok_or("response has no paired OA")?;
        Ok((oa, doc.text.clone()))
    })
    .map_err(data)?;
    let mut templates = Vec::new();
    for t in admitted {
        match template_blanks(&t.body) {
            Ok(_) => templates.push(t),
            Err(e) => skipped.push((t.template_id.clone(), e.to_string())),
        }
    }
    let dir = data_dir(config);
    write_jsonl(&dir.templates(), &templates)?;
    let external: Vec<_> = corpus.of_kind(DocKind::External).cloned().collect();
    if !external.is_empty() {
        write_jsonl(&dir.external(), &external)?;
    }
    let mut table = format!("{:<20}{:<16}{:>8}\n", "template", "topic", "value");
    for t in &templates {
        let _ = writeln!(table, "{:<20}{:<16}{:>8.4}", t.template_id, t.topic_id, t.value.total);
    }
    for (id, reason) in &skipped {
        let _ = writeln!(table, "skipped {id}: {reason}");
    }
    let skipped: Vec<_> = skipped.into_iter().map(|(id, reason)| json!({ "template_id": id, "reason": reason })).collect();
    Ok(Output {
        json: json!({
            "templates": templates.iter().map(|t| &t.template_id).collect::<Vec<_>>(),
            "skipped": skipped,
            "external_documents": external.len(),
        }),
        table,
    })
}

fn load_templates(dir: &DataDir) -> Result<Vec<TemplateRecord>, CliError> {
    let path = dir.templates();
    read_templates(open(&path)?).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn embedding_err(e: EmbeddingError) -> CliError {
    match e {
        EmbeddingError::Remote { .. } => CliError::Backend(e.to_string()),
        other => data(other),
    }
}

fn embed_store(config: &Config, corpus_path: &Path) -> Result<Output, CliError> {
    let dir = data_dir(config);
    let templates = load_templates(&dir)?;
    let corpus = load_corpus(corpus_path)?;
    let provider: Box<dyn EmbeddingProvider> = match config.embedding.provider {
        ProviderKind::Local => {
            let oas = corpus.of_kind(DocKind::Oa).map(|d| d.text.as_str());
            let p = HashedTfIdf::fit(config.embedding.dim, oas).map_err(data)?;
            std::fs::create_dir_all(&dir.root).map_err(|e| io_err(&dir.root, e))?;
            p.save(dir.provider()).map_err(|e| io_err(&dir.provider(), e))?;
            Box::new(p)
        }
        ProviderKind::Remote if !config.remote_enabled => return Err(data("remote backends are disabled by configuration")),
        ProviderKind::Remote => Box::new(RemoteProvider::new(config.embedding.remote.clone())),
    };
    let (store, skipped) =
        build_store(&*provider, &templates, |t| corpus.get(&t.source_oa_id).map(|d| d.text.clone())).map_err(embedding_err)?;
    store.save(dir.embeddings()).map_err(|e| io_err(&dir.embeddings(), e))?;
    let table = format!(
        "provider {} (dim {}): {} templates embedded, {} skipped\n",
        store.provider_tag(),
        store.dim(),
        store.len(),
        skipped.len()
    );
    Ok(Output {
        json: json!({
            "provider_tag": store.provider_tag(),
            "dim": store.dim(),
            "embedded": store.len(),
            "skipped": skipped,
        }),
        table,
    })
}

fn cf_params(config: &Config, method: MethodArg) -> CfParams {
    match method {
        MethodArg::Als => CfParams { method: CfMethod::Als, ..config.cf.als.clone() },
        MethodArg::Bpr => CfParams { method: CfMethod::Bpr, ..config.cf.bpr.clone() },
    }
}

fn training_matrix(interactions: &[Interaction], templates: &[TemplateRecord]) -> Result<InteractionMatrix, CliError> {
    let topic_of: BTreeMap<String, String> =
        templates.iter().map(|t| (t.template_id.clone(), t.topic_id.clone())).collect();
    let unknown: BTreeSet<&str> =
        interactions.iter().map(|i| i.template.as_str()).filter(|t| !topic_of.contains_key(*t)).collect();
    if !unknown.is_empty() {
        log::warn!("{} interacted templates are not in the template store and are ignored", unknown.len());
    }
    let known: Vec<&Interaction> = interactions.iter().filter(|i| topic_of.contains_key(&i.template)).collect();
    Ok(InteractionMatrix::build(known, Vec::new(), topic_of.keys().cloned())
        .map_err(data)?
        .with_topics(topic_of))
}

fn cf_train(config: &Config, interactions: Option<&Path>, method: MethodArg) -> Result<Output, CliError> {
    let dir = data_dir(config);
    let templates = load_templates(&dir)?;
    let interactions = match interactions {
        Some(p) => read_jsonl::<Interaction>(p)?,
        None => {
            let path = dir.events();
            open(&path)?;
            let log = EventLog::open(&path).map_err(data)?;
            interactions_from_events(log.events(), &config.events.weights)
        }
    };
    let matrix = training_matrix(&interactions, &templates)?;
    let params = cf_params(config, method);
    let models = fit_per_topic(&matrix, &params).map_err(data)?;

    let cf_dir = dir.cf_dir();
    if cf_dir.exists() {
        std::fs::remove_dir_all(&cf_dir).map_err(|e| io_err(&cf_dir, e))?;
    }
    std::fs::create_dir_all(&cf_dir).map_err(|e| io_err(&cf_dir, e))?;
    let mut index = BTreeMap::new();
    let mut table = format!("{:<16}{:>8}{:>11}  file\n", "topic", "users", "templates");
    let mut rows = Vec::new();
    for (i, (topic, model)) in models.into_iter().enumerate() {
        let name = model_file_name(i, &topic);
        let model = model.quantized();
        model.save(cf_dir.join(&name)).map_err(|e| io_err(&cf_dir.join(&name), e))?;
        let _ = writeln!(table, "{topic:<16}{:>8}{:>11}  {name}", model.users().len(), model.templates().len());
        rows.push(json!({ "topic_id": topic, "users": model.users().len(), "templates": model.templates().len(), "file": name }));
        index.insert(topic, name);
    }
    let body = serde_json::to_string_pretty(&index).map_err(|e| CliError::Backend(e.to_string()))?;
    std::fs::write(dir.cf_index(), body).map_err(|e| io_err(&dir.cf_index(), e))?;
    let untrained: Vec<String> = matrix.topics().into_iter().filter(|t| !index.contains_key(t)).collect();
    Ok(Output {
        json: json!({ "params": params, "models": rows, "untrained_topics": untrained }),
        table,
    })
}

fn load_stores(config: &Config) -> Result<Stores, CliError> {
    let dir = data_dir(config);
    for required in [dir.templates(), dir.embeddings()] {
        open(&required)?;
    }
    Stores::load(&dir, config).map_err(data)
}

fn recommend(config: &Config, oa: &Path, user: &str, k: Option<usize>, w: Option<f64>) -> Result<Output, CliError> {
    let text = read_text(oa)?;
    let stores = load_stores(config)?;
    let rec = Recommender {
        provider: &*stores.provider,
        store: &stores.store,
        topic_models: &stores.topic_models,
        topic_templates: &stores.topic_templates,
    };
    let k = k.unwrap_or(config.recommend.k);
    let w = w.unwrap_or(config.recommend.blend_weight);
    let slate = rec.recommend(&text, user, k, w).map_err(|e| match e {
        oa_core::cascade::CascadeError::Embedding(e) => embedding_err(e),
        other => data(other),
    })?;
    let mut table = format!("{:<16}{:>5}  {:<20}{:>9}{:>9}{:>9}\n", "topic", "rank", "template", "blended", "cf", "cb");
    let opt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
    for t in &slate.topics {
        for (i, item) in t.items.iter().enumerate() {
            let _ = writeln!(
                table,
                "{:<16}{:>5}  {:<20}{:>9.4}{:>9}{:>9}",
                t.topic_id,
                i + 1,
                item.template_id,
                item.blended,
                opt(item.cf),
                opt(item.cb)
            );
        }
    }
    let mut json = to_json(&slate)?;
    json["user"] = json!(user);
    Ok(Output { json, table })
}

fn evaluate_cmd(config: &Config, cases: &Path, interactions: &Path, k: Option<usize>, w: Option<f64>) -> Result<Output, CliError> {
    let cases: Vec<EvalCase> = read_jsonl(cases)?;
    let interactions: Vec<Interaction> = read_jsonl(interactions)?;
    let stores = load_stores(config)?;
    let templates: Vec<TemplateRecord> = stores.templates.values().cloned().collect();
    let train = training_matrix(&interactions, &templates)?;
    let als = cf_params(config, MethodArg::Als);
    let bpr = cf_params(config, MethodArg::Bpr);
    let global_als = fit_als(&train, &als).map_err(data)?;
    let global_bpr = fit_bpr(&train, &bpr).map_err(data)?;
    let topic_als = fit_per_topic(&train, &als).map_err(data)?;
    let topic_bpr = fit_per_topic(&train, &bpr).map_err(data)?;
    let topics = topic_templates(&stores.store);
    let inputs = EvalInputs {
        provider: &*stores.provider,
        store: &stores.store,
        topic_templates: &topics,
        global_models: vec![(CfMethod::Als, &global_als), (CfMethod::Bpr, &global_bpr)],
        topic_models: vec![(CfMethod::Als, &topic_als), (CfMethod::Bpr, &topic_bpr)],
        train: &train,
        k: k.unwrap_or(config.recommend.k),
        blend_weight: w.unwrap_or(config.recommend.blend_weight),
    };
    let report = evaluate(&inputs, &cases).map_err(data)?;
    Ok(Output { table: render_metrics_table(&report), json: to_json(&report)? })
}

fn keyword_config(config: &Config) -> Result<KeywordConfig, CliError> {
    let mut kc = KeywordConfig { claims_boost: config.keywords.claims_boost, ..KeywordConfig::default() };
    if let Some(path) = &config.keywords.keep_list_file {
        kc = kc.with_keep_lines(&read_text(Path::new(path))?);
    }
    Ok(kc)
}

fn parse_oa_cmd(config: &Config, oa: &Path, claims: Option<&Path>, prior: &[PathBuf]) -> Result<Output, CliError> {
    let text = read_text(oa)?;
    let current = match claims {
        Some(c) => KeywordDoc::with_claims(text.clone(), read_text(c)?),
        None => KeywordDoc::new(text.clone()),
    };
    let prior = prior.iter().map(|p| read_text(p).map(KeywordDoc::new)).collect::<Result<Vec<_>, _>>()?;
    let biblio = parse_oa(&text);
    let keywords = extract_tech_keywords(&current, &prior, &keyword_config(config)?);

    let mut table = String::new();
    let statutes: Vec<String> = biblio.statutes.iter().map(|s| s.render()).collect();
    let claims_list = oa_core::parser::render_claims(&biblio.claims);
    for (label, value) in [
        ("claims", claims_list),
        ("statutes", statutes.join(", ")),
        ("citations", biblio.citations.join(", ")),
        ("parties", biblio.parties.join(", ")),
        ("figures", biblio.figures.join(", ")),
    ] {
        let _ = writeln!(table, "{label:<11}{value}");
    }
    for kw in keywords.keywords.iter().take(config.keywords.top_n) {
        let _ = writeln!(table, "{:<11}{} ({:.1}, {:?})", "keyword", kw.phrase, kw.score, kw.source);
    }
    Ok(Output { json: json!({ "biblio": biblio, "keywords": keywords }), table })
}

fn gen_err(e: GenError) -> CliError {
    match e {
        GenError::Remote { .. } => CliError::Backend(e.to_string()),
        other => data(other),
    }
}

fn generate_cmd(
    config: &Config,
    draft: &Path,
    oa: Option<&Path>,
    template_ids: &[String],
    budget: Option<usize>,
) -> Result<Output, CliError> {
    let draft = read_text(draft)?;
    let oa = match oa {
        Some(p) => {
            let text = read_text(p)?;
            let keywords = extract_tech_keywords(&KeywordDoc::new(text.clone()), &[], &keyword_config(config)?);
            Some((parse_oa(&text), keywords))
        }
        None => None,
    };
    let dir = data_dir(config);
    let mut templates = Vec::new();
    if !template_ids.is_empty() {
        let known: BTreeMap<String, TemplateRecord> =
            load_templates(&dir)?.into_iter().map(|t| (t.template_id.clone(), t)).collect();
        for id in template_ids {
            let t = known.get(id).ok_or_else(|| data(format!("unknown template {id}")))?;
            let body = match &oa {
                Some((b, k)) => autofill(&t.body, b, k).map_err(data)?.body,
                None => t.body.clone(),
            };
            templates.push(body);
        }
    }
    let external = if dir.external().exists() {
        load_corpus(&dir.external())?.of_kind(DocKind::External).cloned().collect()
    } else {
        Vec::new()
    };
    let gen_cfg = &config.generation;
    let role = gen_cfg.role.clone().unwrap_or_else(|| DEFAULT_ROLE.to_string());
    let clusters = prompt_clusters(&PromptSources {
        role: &role,
        draft: &draft,
        templates,
        oa: oa.as_ref().map(|(b, k)| (b, k)),
        external: &external,
        keyword_top_n: config.keywords.top_n,
        relevant_top_n: gen_cfg.relevant_top_n,
        priorities: gen_cfg.priorities,
    });
    let counter = TokenCounter { ratio: gen_cfg.token_ratio };
    let budget = budget.unwrap_or(gen_cfg.budget);
    let bundle = optimize_tokens(assemble(&clusters).map_err(gen_err)?, budget, &counter).map_err(gen_err)?;
    let backend = backend_from_config(config).map_err(data)?;
    let generation = generate(&bundle, &*backend, &counter).map_err(gen_err)?;
    let table = format!("{}\n", generation.text.trim_end());
    Ok(Output {
        json: json!({
            "text": generation.text,
            "backend": generation.backend_name,
            "prompt_tokens": generation.token_usage.prompt,
            "completion_tokens": generation.token_usage.completion,
            "budget": budget,
            "dropped_segments": bundle.dropped.len(),
            "duplicates_removed": bundle.duplicates_removed,
            "trimmed": bundle.trimmed,
            "prompt": generation.prompt,
        }),
        table,
    })
}

fn serve_cmd(mut config: Config, bind: Option<String>) -> Result<(), CliError> {
    if let Some(b) = bind {
        config.service.bind = b;
    }
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Backend(e.to_string()))?;
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    runtime.block_on(serve(config, shutdown)).map_err(|e| match e {
        oa_service::ServeError::Store(e) => data(e),
        other => CliError::Backend(other.to_string()),
    })
}
