//! Subcommand implementations.

use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;

use dialogscope::annotation::{AnnotationSet, Attribute};
use dialogscope::corpus::{
    self, message_volumes, parse_offset, Conversation, IngestFormat, IngestOptions, SpeakerId,
};
use dialogscope::embeddings::{self, EmbeddingTable};
use dialogscope::eval::{
    loso_folds, run_fold, run_grid, train_val_fold, write_report_csv, write_report_json, Dataset,
    EvalContext, ExperimentSpec, GridRow, ModelSettings,
};
use dialogscope::features::{FeatureExtractor, FeatureKind, WindowFeatures};
use dialogscope::graph::{
    build_mention_graph, edge_weights, shortest_paths, AliasTable, WeightMode,
};
use dialogscope::lexicon::CategoryLexicon;
use dialogscope::model::{Checkpoint, DecoderSet};
use dialogscope::report::{
    cluster_report, dominance_report, mirroring_curve, time_distribution, write_cluster_csv,
    write_dominance_csv, write_json, write_mirroring_csv, write_time_csv, ReportKind,
    DEFAULT_CHECKPOINTS, DEFAULT_MIRRORING_GROUPS,
};
use dialogscope::synth::{generate, SynthSpec};

use crate::config::Settings;

fn load_corpus(path: &Path) -> Result<Vec<Conversation>> {
    corpus::read_canonical(path).with_context(|| format!("reading corpus {}", path.display()))
}

fn load_annotations(path: &Path) -> Result<AnnotationSet> {
    AnnotationSet::load(path).with_context(|| format!("reading annotations {}", path.display()))
}

fn load_lexicon(settings: &Settings, flag: &Option<PathBuf>) -> Result<CategoryLexicon> {
    match flag.as_ref().or(settings.lexicon.as_ref()) {
        Some(path) => CategoryLexicon::load(path)
            .with_context(|| format!("reading lexicon {}", path.display())),
        None => Ok(CategoryLexicon::standin().clone()),
    }
}

fn load_aliases(
    settings: &Settings,
    flag: &Option<PathBuf>,
    corpus: &[Conversation],
) -> Result<AliasTable> {
    match flag.as_ref().or(settings.aliases.as_ref()) {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading aliases {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing aliases {}", path.display()))
        }
        None => {
            let mut ids: Vec<SpeakerId> = corpus.iter().map(|c| c.partner_id.clone()).collect();
            ids.push(SpeakerId::author());
            Ok(AliasTable::from_speakers(&ids))
        }
    }
}

fn load_table(
    settings: &Settings,
    flag: &Option<PathBuf>,
    corpus: &[Conversation],
    seed: u64,
) -> Result<EmbeddingTable> {
    let path = flag
        .as_ref()
        .or(settings.embeddings.as_ref())
        .context("an embeddings file is required (--embeddings or config)")?;
    let mut vocab: std::collections::HashMap<String, u64> = Default::default();
    for conv in corpus {
        for m in &conv.messages {
            for t in m.tokens() {
                *vocab.entry(t).or_insert(0) += 1;
            }
        }
    }
    let (table, coverage) = EmbeddingTable::load(path, &vocab, seed)
        .with_context(|| format!("reading embeddings {}", path.display()))?;
    log::info!(
        "embedding coverage {:.1}% ({} of {} corpus tokens)",
        100.0 * coverage.coverage_rate,
        coverage.covered_tokens,
        coverage.total_tokens
    );
    Ok(table)
}

fn parse_kinds(csv: &str) -> Result<Vec<FeatureKind>> {
    csv.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| FeatureKind::parse(s).with_context(|| format!("unknown feature kind {s:?}")))
        .collect()
}

fn parse_weight_mode(s: &str) -> Result<WeightMode> {
    match s {
        "inverted" => Ok(WeightMode::Inverted),
        "paper_formula" => Ok(WeightMode::PaperFormula),
        other => bail!("unknown weight mode {other:?} (inverted or paper_formula)"),
    }
}

fn create(path: &Path) -> Result<BufWriter<std::fs::File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(BufWriter::new(std::fs::File::create(path).with_context(
        || format!("creating {}", path.display()),
    )?))
}

fn emit(settings: &Settings, json: serde_json::Value, human: String) {
    if settings.json {
        println!("{json}");
    } else {
        println!("{human}");
    }
}

#[derive(Args)]
pub struct IngestArgs {
    /// Export file to parse.
    #[arg(long)]
    input: PathBuf,
    /// Export format: canonical, hangouts, or messenger.
    #[arg(long)]
    format: String,
    /// The corpus owner's display name (needed for messenger exports).
    #[arg(long)]
    author: Option<String>,
    /// Fixed offset (for ISO timestamps without one), e.g. -05:00.
    #[arg(long)]
    timezone: Option<String>,
    /// Output corpus file (default <out-dir>/corpus.dsc).
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn ingest(settings: &Settings, args: IngestArgs) -> Result<()> {
    let format = IngestFormat::parse(&args.format)
        .with_context(|| format!("unknown format {:?} (canonical, hangouts, messenger)", args.format))?;
    let options = IngestOptions {
        author_name: args.author,
        timezone: match &args.timezone {
            Some(tz) => Some(parse_offset(tz).with_context(|| format!("bad offset {tz:?}"))?),
            None => None,
        },
    };
    let corpus = corpus::ingest_with(&args.input, format, &options)?;
    let out = args.out.unwrap_or_else(|| settings.out_path("corpus.dsc"));
    corpus::write_canonical(&corpus, create(&out)?)?;
    let messages: usize = corpus.iter().map(Conversation::len).sum();
    emit(
        settings,
        serde_json::json!({
            "corpus": out,
            "conversations": corpus.len(),
            "messages": messages,
        }),
        format!(
            "ingested {} conversations, {} messages -> {}",
            corpus.len(),
            messages,
            out.display()
        ),
    );
    Ok(())
}

#[derive(Args)]
pub struct AnnotateArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Annotation store (created when missing).
    #[arg(long)]
    annotations: PathBuf,
}

pub fn annotate(settings: &Settings, args: AnnotateArgs) -> Result<()> {
    let corpus = load_corpus(&args.corpus)?;
    let existing = if args.annotations.exists() {
        load_annotations(&args.annotations)?
    } else {
        AnnotationSet::default()
    };
    let before = existing.len();
    let stdin = std::io::stdin();
    let mut input = stdin.lock();
    let mut output = std::io::stdout();
    let set = dialogscope::annotation::annotate_interactive(
        &corpus,
        existing,
        &args.annotations,
        &mut input,
        &mut output,
    )?;
    emit(
        settings,
        serde_json::json!({
            "annotations": args.annotations,
            "annotated": set.len(),
            "new": set.len() - before,
        }),
        format!(
            "{} speakers annotated ({} new) -> {}",
            set.len(),
            set.len() - before,
            args.annotations.display()
        ),
    );
    Ok(())
}

#[derive(Args)]
pub struct StatsArgs {
    #[arg(long)]
    corpus: PathBuf,
}

pub fn stats(settings: &Settings, args: StatsArgs) -> Result<()> {
    let corpus = load_corpus(&args.corpus)?;
    let stats = corpus::stats(&corpus)?;
    if settings.json {
        println!("{}", serde_json::to_string_pretty(&stats)?);
        return Ok(());
    }
    let row = |label: &str, f: &dyn Fn(&corpus::SideStats) -> String| {
        format!(
            "{label:<26} {:>12} {:>12} {:>12}",
            f(&stats.author),
            f(&stats.others),
            f(&stats.all)
        )
    };
    println!("{:<26} {:>12} {:>12} {:>12}", "", "Author", "Others", "All");
    println!("{}", row("Total Messages", &|s| s.total_messages.to_string()));
    println!("{}", row("Unique Messages", &|s| s.unique_messages.to_string()));
    println!("{}", row("Total Tokens", &|s| s.total_tokens.to_string()));
    println!("{}", row("Unique Tokens", &|s| s.unique_tokens.to_string()));
    println!(
        "{}",
        row("Average Tokens / Message", &|s| format!(
            "{:.2}",
            s.avg_tokens_per_message
        ))
    );
    Ok(())
}

#[derive(Args)]
pub struct FeaturizeArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    aliases: Option<PathBuf>,
    /// Comma-separated feature kinds (default: liwc,time,frequency,style,graph).
    #[arg(long)]
    kinds: Option<String>,
    /// Target attribute; enables attribute features when included in kinds.
    #[arg(long)]
    target: Option<String>,
    /// Write one cache per leave-one-speaker-out fold.
    #[arg(long)]
    all_folds: bool,
    /// Hold out one speaker (single-fold cache).
    #[arg(long)]
    hold_out: Option<String>,
    #[arg(long, default_value_t = 5)]
    window_size: usize,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, default_value = "inverted")]
    weight_mode: String,
}

pub fn featurize(settings: &Settings, args: FeaturizeArgs) -> Result<()> {
    let corpus = load_corpus(&args.corpus)?;
    let annotations = load_annotations(&args.annotations)?;
    let lexicon = load_lexicon(settings, &args.lexicon)?;
    let aliases = load_aliases(settings, &args.aliases, &corpus)?;
    let weight_mode = parse_weight_mode(&args.weight_mode)?;
    let kinds = match &args.kinds {
        Some(csv) => parse_kinds(csv)?,
        None => vec![
            FeatureKind::Liwc,
            FeatureKind::Time,
            FeatureKind::Frequency,
            FeatureKind::Style,
            FeatureKind::Graph,
        ],
    };
    let target = match &args.target {
        Some(name) => {
            Some(Attribute::parse(name).with_context(|| format!("unknown attribute {name:?}"))?)
        }
        None => None,
    };
    if kinds.contains(&FeatureKind::Attributes) && target.is_none() {
        bail!("attribute features need --target");
    }
    let dataset = Dataset::build(corpus, annotations, args.window_size, args.stride)?;

    let held_outs: Vec<Option<SpeakerId>> = if args.all_folds {
        dataset
            .speakers_with_windows()
            .into_iter()
            .map(Some)
            .collect()
    } else {
        vec![args.hold_out.as_ref().map(SpeakerId::new)]
    };

    let mut written = Vec::new();
    for held_out in held_outs {
        let training: Vec<Conversation> = dataset
            .corpus
            .iter()
            .filter(|c| Some(&c.partner_id) != held_out.as_ref())
            .cloned()
            .collect();
        let distances = if kinds.contains(&FeatureKind::Graph) {
            let graph = build_mention_graph(&training, &aliases);
            Some(shortest_paths(&edge_weights(&graph, weight_mode))?)
        } else {
            None
        };
        let extractor = FeatureExtractor {
            lexicon: &lexicon,
            distances: distances.as_ref(),
            profiles: Some(&dataset.annotations.profiles),
            target,
            kinds: kinds.clone(),
        };
        let entries: Result<Vec<WindowFeatures>, dialogscope::Error> = dataset
            .windows
            .iter()
            .map(|(conv_idx, window)| {
                let vectors = extractor.extract(&dataset.corpus[*conv_idx], window)?;
                Ok(WindowFeatures {
                    partner_id: window.partner_id.clone(),
                    window_index: window.window_index,
                    vectors,
                })
            })
            .collect();
        let name = match &held_out {
            Some(id) => format!("features-{id}.tsv"),
            None => "features-global.tsv".to_string(),
        };
        let path = settings.out_path(&name);
        dialogscope::features::write_feature_cache(&entries?, create(&path)?)?;
        written.push(path);
    }
    emit(
        settings,
        serde_json::json!({ "caches": written }),
        format!("wrote {} feature cache(s) to {}", written.len(), settings.out_dir.display()),
    );
    Ok(())
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    aliases: Option<PathBuf>,
    /// Attribute to decode, or "joint" for all seven.
    #[arg(long)]
    target: String,
    /// Comma-separated feature kinds (default: liwc,time,frequency,style,graph).
    #[arg(long)]
    kinds: Option<String>,
    /// Hold out one speaker's windows as a test set.
    #[arg(long)]
    hold_out: Option<String>,
    #[arg(long, default_value_t = 5)]
    window_size: usize,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, default_value = "inverted")]
    weight_mode: String,
    #[arg(long, default_value_t = 64)]
    lstm_hidden: usize,
    #[arg(long, default_value_t = 64)]
    hidden_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 2)]
    patience: usize,
    /// Output checkpoint (default <out-dir>/model-<target>.ckpt).
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn train(settings: &Settings, args: TrainArgs) -> Result<()> {
    let corpus = load_corpus(&args.corpus)?;
    let annotations = load_annotations(&args.annotations)?;
    let lexicon = load_lexicon(settings, &args.lexicon)?;
    let aliases = load_aliases(settings, &args.aliases, &corpus)?;
    let table = load_table(settings, &args.embeddings, &corpus, settings.seed)?;
    let decoders = if args.target == "joint" {
        DecoderSet::Joint
    } else {
        DecoderSet::Single(
            Attribute::parse(&args.target)
                .with_context(|| format!("unknown attribute {:?}", args.target))?,
        )
    };
    let kinds = match &args.kinds {
        Some(csv) => parse_kinds(csv)?,
        None => vec![
            FeatureKind::Liwc,
            FeatureKind::Time,
            FeatureKind::Frequency,
            FeatureKind::Style,
            FeatureKind::Graph,
        ],
    };
    if kinds.contains(&FeatureKind::Attributes) && decoders == DecoderSet::Joint {
        bail!("attribute features cannot be used with joint decoding");
    }

    let dataset = Dataset::build(corpus, annotations, args.window_size, args.stride)?;
    let spec = ExperimentSpec {
        rows: vec![GridRow::Emb],
        targets: decoders.attributes(),
        seed: settings.seed,
        budget: None,
        weight_mode: parse_weight_mode(&args.weight_mode)?,
        settings: ModelSettings {
            lstm_hidden: args.lstm_hidden,
            hidden_size: args.hidden_size,
            learning_rate: args.learning_rate,
            epochs: args.epochs,
            batch_size: args.batch_size,
            patience: args.patience,
            ..ModelSettings::default()
        },
    };
    let fold = match &args.hold_out {
        Some(name) => {
            let held_out = SpeakerId::new(name.clone());
            loso_folds(&dataset, settings.seed)?
                .into_iter()
                .find(|f| f.held_out == held_out)
                .with_context(|| format!("speaker {name} has no windows"))?
        }
        None => train_val_fold(&dataset, settings.seed),
    };

    let ctx = EvalContext {
        dataset: &dataset,
        lexicon: &lexicon,
        table: &table,
        aliases: &aliases,
    };
    let run = run_fold(&ctx, &spec, &dataset, &fold, &kinds, decoders)?;
    let out = args.out.unwrap_or_else(|| {
        settings.out_path(&format!("model-{}.ckpt", args.target))
    });
    let checkpoint = Checkpoint::new(
        run.model.params,
        run.model.node_order,
        run.model.normalizers,
        run.model.feature_dims,
    );
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    checkpoint.save(&out)?;
    emit(
        settings,
        serde_json::json!({
            "checkpoint": out,
            "curve": run.model.curve,
            "held_out_windows": fold.test.len(),
        }),
        {
            let mut text = format!("checkpoint -> {}", out.display());
            for epoch in &run.model.curve {
                text.push_str(&format!(
                    "\nepoch {}: train loss {:.4}, val loss {:.4}",
                    epoch.epoch, epoch.train_loss, epoch.val_loss
                ));
            }
            text
        },
    );
    Ok(())
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    aliases: Option<PathBuf>,
    /// Grid preset: quick or full. Ignored when --spec is given.
    #[arg(long, default_value = "quick")]
    grid: String,
    /// Experiment spec file (TOML) overriding the preset.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Window sample budget (overrides the spec).
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, default_value_t = 5)]
    window_size: usize,
    #[arg(long, default_value_t = 1)]
    stride: usize,
}

pub fn evaluate(settings: &Settings, args: EvaluateArgs) -> Result<()> {
    let corpus = load_corpus(&args.corpus)?;
    let annotations = load_annotations(&args.annotations)?;
    let lexicon = load_lexicon(settings, &args.lexicon)?;
    let aliases = load_aliases(settings, &args.aliases, &corpus)?;
    let table = load_table(settings, &args.embeddings, &corpus, settings.seed)?;

    let mut spec = match &args.spec {
        Some(path) => ExperimentSpec::load(path)?,
        None => match args.grid.as_str() {
            "quick" => ExperimentSpec::quick(settings.seed),
            "full" => ExperimentSpec::full(settings.seed),
            other => bail!("unknown grid preset {other:?} (quick or full)"),
        },
    };
    if args.spec.is_none() {
        spec.seed = settings.seed;
    }
    if let Some(budget) = args.budget {
        spec.budget = Some(budget);
    }

    let dataset = Dataset::build(corpus, annotations, args.window_size, args.stride)?;
    let ctx = EvalContext {
        dataset: &dataset,
        lexicon: &lexicon,
        table: &table,
        aliases: &aliases,
    };
    let report = run_grid(&ctx, &spec)?;

    let spec_path = settings.out_path("experiment.toml");
    spec.save(&spec_path)?;
    let csv_path = settings.out_path("report.csv");
    write_report_csv(&report, create(&csv_path)?)?;
    let json_path = settings.out_path("report.json");
    write_report_json(&report, create(&json_path)?)?;

    if settings.json {
        println!(
            "{}",
            serde_json::json!({
                "spec": spec_path,
                "csv": csv_path,
                "json": json_path,
                "rows": report.rows.len(),
            })
        );
    } else {
        println!(
            "{:<18} {:<17} {:>9} {:>9}",
            "row", "attribute", "context", "speaker"
        );
        for row in &report.rows {
            println!(
                "{:<18} {:<17} {:>8.1} {:>8.1}",
                row.row, row.attribute.name(), row.context_accuracy, row.speaker_accuracy
            );
        }
        println!("reports -> {} and {}", csv_path.display(), json_path.display());
    }
    Ok(())
}

#[derive(Args)]
pub struct ReportArgs {
    /// Report kind: dominance, time, mirroring, or clusters.
    kind: String,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    aliases: Option<PathBuf>,
    /// Dominance: classes listed per attribute value.
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    /// Clusters: partners shown in the display export.
    #[arg(long, default_value_t = 20)]
    top_n: usize,
    /// Clusters: minimum mention count for a displayed edge.
    #[arg(long, default_value_t = 25)]
    edge_threshold: u32,
    /// Mirroring: comma-separated message-count checkpoints.
    #[arg(long)]
    checkpoints: Option<String>,
}

pub fn report(settings: &Settings, args: ReportArgs) -> Result<()> {
    let kind = ReportKind::parse(&args.kind).with_context(|| {
        format!("unknown report kind {:?} (dominance, time, mirroring, clusters)", args.kind)
    })?;
    let corpus = load_corpus(&args.corpus)?;
    let annotations = load_annotations(&args.annotations)?;

    let mut outputs: Vec<PathBuf> = Vec::new();
    match kind {
        ReportKind::Dominance => {
            let lexicon = load_lexicon(settings, &args.lexicon)?;
            let report = dominance_report(&corpus, &annotations, &lexicon, args.top_k)?;
            let csv = settings.out_path("dominance.csv");
            write_dominance_csv(&report, create(&csv)?)?;
            let json = settings.out_path("dominance.json");
            write_json(&report, create(&json)?)?;
            outputs.extend([csv, json]);
        }
        ReportKind::Time => {
            let report = time_distribution(&corpus, &annotations)?;
            let csv = settings.out_path("time.csv");
            write_time_csv(&report, create(&csv)?)?;
            let json = settings.out_path("time.json");
            write_json(&report, create(&json)?)?;
            outputs.extend([csv, json]);
        }
        ReportKind::Mirroring => {
            let checkpoints: Vec<usize> = match &args.checkpoints {
                Some(csv) => csv
                    .split(',')
                    .map(|s| s.trim().parse().context("bad checkpoint"))
                    .collect::<Result<_>>()?,
                None => DEFAULT_CHECKPOINTS.to_vec(),
            };
            let report =
                mirroring_curve(&corpus, &annotations, &DEFAULT_MIRRORING_GROUPS, &checkpoints)?;
            let csv = settings.out_path("mirroring.csv");
            write_mirroring_csv(&report, create(&csv)?)?;
            let json = settings.out_path("mirroring.json");
            write_json(&report, create(&json)?)?;
            outputs.extend([csv, json]);
        }
        ReportKind::Clusters => {
            let aliases = load_aliases(settings, &args.aliases, &corpus)?;
            let report = cluster_report(
                &corpus,
                &annotations,
                &aliases,
                args.top_n,
                args.edge_threshold,
                settings.seed,
            )?;
            let csv = settings.out_path("clusters.csv");
            write_cluster_csv(&report, create(&csv)?)?;
            let json = settings.out_path("clusters.json");
            write_json(&report, create(&json)?)?;
            let graph = settings.out_path("clusters-graph.txt");
            report.export.write_text(create(&graph)?)?;
            outputs.extend([csv, json, graph]);
        }
    }
    emit(
        settings,
        serde_json::json!({ "kind": kind.name(), "outputs": outputs }),
        format!(
            "{} report -> {}",
            kind.name(),
            outputs
                .iter()
                .map(|p| p.display().to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ),
    );
    Ok(())
}

#[derive(Args)]
pub struct SynthArgs {
    /// Number of conversation partners.
    #[arg(long, default_value_t = 20)]
    speakers: usize,
    /// Synth spec file (TOML); flags below are ignored when given.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Use the published 104-speaker attribute distribution.
    #[arg(long)]
    table2: bool,
    #[arg(long, default_value_t = 30)]
    messages_min: usize,
    #[arg(long, default_value_t = 60)]
    messages_max: usize,
    #[arg(long, default_value_t = 0.0)]
    vocabulary_bias: f64,
    #[arg(long, default_value_t = 0.0)]
    hour_bias: f64,
    #[arg(long, default_value_t = 0.0)]
    mention_bias: f64,
    #[arg(long, default_value_t = 0.0)]
    style_convergence: f64,
    /// Dimension of the emitted synthetic embedding table.
    #[arg(long, default_value_t = 32)]
    embedding_dim: usize,
}

pub fn synth(settings: &Settings, args: SynthArgs) -> Result<()> {
    let spec = match &args.spec {
        Some(path) => SynthSpec::load(path)?,
        None => {
            let mut spec = if args.table2 {
                SynthSpec::default_table2(settings.seed)
            } else {
                SynthSpec::balanced(args.speakers, settings.seed)
            };
            spec.seed = settings.seed;
            if !args.table2 {
                spec.speakers = args.speakers;
            }
            spec.messages_min = args.messages_min;
            spec.messages_max = args.messages_max;
            spec.vocabulary_bias = args.vocabulary_bias;
            spec.hour_bias = args.hour_bias;
            spec.mention_bias = args.mention_bias;
            spec.style_convergence = args.style_convergence;
            spec
        }
    };
    let out = generate(&spec)?;

    let corpus_path = settings.out_path("corpus.dsc");
    corpus::write_canonical(&out.corpus, create(&corpus_path)?)?;
    let annotations_path = settings.out_path("annotations.toml");
    out.annotations.save(&annotations_path)?;
    let aliases_path = settings.out_path("aliases.toml");
    std::fs::write(
        &aliases_path,
        toml::to_string_pretty(&out.aliases).context("encoding aliases")?,
    )?;
    let spec_path = settings.out_path("synth-spec.toml");
    spec.save(&spec_path)?;
    let manifest_path = settings.out_path("manifest.json");
    write_json(&out.manifest, create(&manifest_path)?)?;

    // synthetic embeddings over the generated vocabulary, so the pipeline
    // runs end to end without external vector files
    let vocab = out
        .corpus
        .iter()
        .flat_map(|c| c.messages.iter().flat_map(|m| m.tokens()));
    let table = embeddings::synthetic_table(vocab, args.embedding_dim, spec.seed)?;
    let embeddings_path = settings.out_path("embeddings.txt");
    embeddings::write_table_text(&table, create(&embeddings_path)?)?;

    let messages: usize = out.corpus.iter().map(Conversation::len).sum();
    emit(
        settings,
        serde_json::json!({
            "corpus": corpus_path,
            "annotations": annotations_path,
            "aliases": aliases_path,
            "embeddings": embeddings_path,
            "manifest": manifest_path,
            "spec": spec_path,
            "speakers": out.corpus.len(),
            "messages": messages,
        }),
        format!(
            "synthetic corpus: {} speakers, {} messages -> {}",
            out.corpus.len(),
            messages,
            settings.out_dir.display()
        ),
    );
    let _ = message_volumes(&out.corpus);
    Ok(())
}
