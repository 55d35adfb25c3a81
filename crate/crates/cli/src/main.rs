use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tcr_sparse::classify::{ClassifierKind, ClassifierParams};
use tcr_sparse::embedding::EncodingMode;
use tcr_sparse::kmers::KmerSpec;
use tcr_sparse::lasso::{select_features, LassoModel};
use tcr_sparse::metrics::EvalReport;
use tcr_sparse::pipeline::{self as pl, AlphaChoice, ModelBundle, RunConfig};
use tcr_sparse::projection::TsneConfig;
use tcr_sparse::seqio::{compute_stats, load_sequences};
use tcr_sparse::{Error, ErrorKind, Result};

const THREADS_ENV: &str = "TCR_SPARSE_THREADS";

/// Sparse k-mer coding, Lasso feature selection and classification of
/// labeled protein sequences.
#[derive(Parser)]
#[command(name = "tcr-sparse", version)]
struct Cli {
    /// Worker threads (default: all cores, or $TCR_SPARSE_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-class counts and sequence lengths.
    Stats {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        map_unknown: bool,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
        /// Also write stats.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Encode sequences into embedding.txt plus an embedding.json sidecar.
    Embed {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        embed: EmbedArgs,
    },
    /// Fit one-vs-rest Lasso on an embedding and write lasso.json.
    Select {
        /// Directory holding embedding.txt / embedding.json.
        #[arg(long)]
        embedding: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 1000)]
        max_iter: usize,
    },
    /// Train classifiers on a selected embedding and write models.json.
    Train {
        #[arg(long)]
        embedding: PathBuf,
        #[arg(long)]
        lasso: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated subset of knn,nb,lr,dt.
        #[arg(long, value_delimiter = ',', default_value = "knn,nb,lr,dt")]
        classifiers: Vec<ClassifierKind>,
        #[arg(long, default_value_t = 3)]
        knn_k: usize,
    },
    /// Score trained models on an embedding and write report.json.
    Evaluate {
        #[arg(long)]
        embedding: PathBuf,
        #[arg(long)]
        lasso: PathBuf,
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// t-SNE of an embedding into tsne.csv and tsne.svg.
    Project {
        #[arg(long)]
        embedding: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 30.0)]
        perplexity: f64,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5000)]
        max_points: usize,
    },
    /// Split, select, train and evaluate over several seeded runs.
    Pipeline {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        embed: EmbedArgs,
        #[arg(long)]
        alpha: Option<AlphaChoice>,
        #[arg(long, value_delimiter = ',')]
        classifiers: Option<Vec<ClassifierKind>>,
        #[arg(long)]
        knn_k: Option<usize>,
        #[arg(long)]
        test_frac: Option<f64>,
        #[arg(long)]
        val_frac: Option<f64>,
        #[arg(long)]
        n_runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write tsne.csv / tsne.svg.
        #[arg(long)]
        tsne: bool,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Map nonstandard residues to X instead of failing.
    #[arg(long)]
    map_unknown: bool,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    gap: Option<usize>,
    /// bag-of-kmers, positional-concat or sequence-ohe.
    #[arg(long)]
    mode: Option<EncodingMode>,
    #[arg(long)]
    max_len: Option<usize>,
    /// Append label-keyed domain-knowledge features (leaks the label).
    #[arg(long)]
    domain_knowledge: bool,
    #[arg(long)]
    domain_table: Option<PathBuf>,
    #[arg(long)]
    normalize: bool,
}

fn build_config(common: &CommonArgs, embed: &EmbedArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &common.input {
        cfg.input = p.clone();
    }
    if let Some(p) = &common.out {
        cfg.output_dir = Some(p.clone());
    }
    cfg.map_unknown |= common.map_unknown;
    let spec = &mut cfg.embedding;
    if embed.k.is_some() || embed.gap.is_some() {
        spec.kmer = KmerSpec::new(embed.k.unwrap_or(spec.kmer.k), embed.gap.unwrap_or(spec.kmer.gap))?;
    }
    if let Some(m) = embed.mode {
        spec.mode = m;
    }
    if embed.max_len.is_some() {
        spec.max_len = embed.max_len;
    }
    spec.use_domain_knowledge |= embed.domain_knowledge;
    spec.normalize |= embed.normalize;
    if let Some(p) = &embed.domain_table {
        cfg.domain_table = Some(p.clone());
    }
    if cfg.input.as_os_str().is_empty() {
        return Err(Error::InvalidArgument("no input file (use --input or set \"input\" in --config)".into()));
    }
    Ok(cfg)
}

fn output_dir(cfg: &RunConfig) -> Result<&Path> {
    cfg.output_dir
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument("no output directory (use --out or set \"output_dir\")".into()))
}

fn leakage_banner(cfg: &RunConfig) {
    if cfg.embedding.use_domain_knowledge {
        let rule = "!".repeat(72);
        eprintln!("{rule}\n{}\n{rule}", pl::LEAKAGE_WARNING);
    }
}

fn cmd_stats(input: &Path, map_unknown: bool, json: bool, out: Option<&Path>) -> Result<()> {
    let records = load_sequences(input, map_unknown)?;
    let stats = compute_stats(&records)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&stats)?);
    } else {
        println!("{stats}");
    }
    if let Some(dir) = out {
        pl::ensure_dir(dir)?;
        pl::write_json(&dir.join("stats.json"), &stats)?;
    }
    Ok(())
}

fn cmd_embed(cfg: &RunConfig) -> Result<()> {
    let dir = output_dir(cfg)?;
    leakage_banner(cfg);
    let records = pl::load_input(cfg)?;
    let table = cfg.domain_table()?;
    let e = pl::embed_records(&records, &cfg.embedding, table.as_ref())?;
    pl::write_embedding(dir, &e)?;
    log::info!("{} x {} embedding, {} nonzeros", e.matrix.rows(), e.matrix.cols(), e.matrix.nnz());
    Ok(())
}

fn cmd_select(embedding: &Path, out: &Path, alpha: f64, tol: f64, max_iter: usize) -> Result<()> {
    let e = pl::read_embedding(embedding)?;
    let (_, y) = pl::index_labels(&e.sidecar.labels);
    let params = tcr_sparse::lasso::LassoParams { alpha, tol, max_iter };
    let mut model = select_features(&e.matrix, &y, &params)?;
    model.config_hash = Some(e.sidecar.config_hash.clone());
    if model.selected.is_empty() {
        log::warn!("no features selected at alpha = {alpha}");
    }
    pl::ensure_dir(out)?;
    pl::write_json(&out.join(pl::LASSO_FILE), &model)?;
    println!("selected {} of {} features", model.selected.len(), model.n_features);
    Ok(())
}

fn load_lasso(path: &Path, embedding_hash: &str) -> Result<LassoModel> {
    let model: LassoModel = pl::read_json(path)?;
    pl::check_provenance(embedding_hash, model.config_hash.as_deref(), &path.display().to_string())?;
    Ok(model)
}

fn cmd_train(embedding: &Path, lasso: &Path, out: &Path, kinds: &[ClassifierKind], knn_k: usize) -> Result<()> {
    let e = pl::read_embedding(embedding)?;
    let model = load_lasso(lasso, &e.sidecar.config_hash)?;
    let (class_names, y) = pl::index_labels(&e.sidecar.labels);
    let params = ClassifierParams {
        knn_k,
        ..Default::default()
    };
    let (models, times) = pl::train_models(&e.matrix, &y, class_names.len(), &model, kinds, &params)?;
    let bundle = ModelBundle {
        config_hash: e.sidecar.config_hash,
        class_names,
        n_features: model.selected.len(),
        models,
        train_time_seconds: times,
    };
    pl::ensure_dir(out)?;
    pl::write_json(&out.join(pl::MODELS_FILE), &bundle)
}

fn cmd_evaluate(embedding: &Path, lasso: &Path, models: &Path, out: &Path) -> Result<()> {
    let e = pl::read_embedding(embedding)?;
    let model = load_lasso(lasso, &e.sidecar.config_hash)?;
    let bundle: ModelBundle = pl::read_json(models)?;
    pl::check_provenance(&e.sidecar.config_hash, Some(&bundle.config_hash), &models.display().to_string())?;
    let y = pl::encode_labels(&e.sidecar.labels, &bundle.class_names)?;
    let metrics = pl::evaluate_models(&e.matrix, &y, &model, &bundle.models, &bundle.train_time_seconds)?;
    print_summary(&metrics);
    let report = EvalReport::single_run(metrics)?;
    let mut value = serde_json::to_value(&report)?;
    value["config_hash"] = serde_json::Value::String(e.sidecar.config_hash);
    value["class_names"] = serde_json::to_value(&bundle.class_names)?;
    pl::ensure_dir(out)?;
    pl::write_json(&out.join(pl::REPORT_FILE), &value)
}

fn cmd_project(embedding: &Path, out: &Path, cfg: TsneConfig) -> Result<()> {
    let e = pl::read_embedding(embedding)?;
    let (_, y) = pl::index_labels(&e.sidecar.labels);
    let p = pl::project_embedding(&e.matrix, &y, &cfg)?;
    pl::ensure_dir(out)?;
    pl::write_projection(out, &p, &e.sidecar.ids, &e.sidecar.labels)
}

fn cmd_pipeline(cfg: &RunConfig) -> Result<()> {
    let dir = output_dir(cfg)?.to_path_buf();
    leakage_banner(cfg);
    let records = pl::load_input(cfg)?;
    let out = pl::run_pipeline(cfg, &records)?;
    pl::write_pipeline_outputs(&dir, &out)?;
    let means: BTreeMap<String, _> = out
        .report
        .evaluation
        .classifiers
        .iter()
        .map(|(k, r)| (k.clone(), r.mean))
        .collect();
    print_summary(&means);
    Ok(())
}

fn print_summary(metrics: &BTreeMap<String, tcr_sparse::metrics::RunMetrics>) {
    println!(
        "{:<6} {:>9} {:>9} {:>9} {:>9} {:>9} {:>11}",
        "model", "accuracy", "prec(w)", "recall(w)", "f1(w)", "f1(mac)", "auc(w)"
    );
    for (name, m) in metrics {
        println!(
            "{:<6} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>11.4}",
            name, m.accuracy, m.precision_weighted, m.recall_weighted, m.f1_weighted, m.f1_macro, m.roc_auc_ovr_weighted
        );
    }
}

fn configure_threads(flag: Option<usize>) -> Result<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::InvalidArgument("thread count must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads(cli.threads)?;
    match cli.command {
        Command::Stats {
            input,
            map_unknown,
            json,
            out,
        } => cmd_stats(&input, map_unknown, json, out.as_deref()),
        Command::Embed { common, embed } => cmd_embed(&build_config(&common, &embed)?),
        Command::Select {
            embedding,
            out,
            alpha,
            tol,
            max_iter,
        } => cmd_select(&embedding, &out, alpha, tol, max_iter),
        Command::Train {
            embedding,
            lasso,
            out,
            classifiers,
            knn_k,
        } => cmd_train(&embedding, &lasso, &out, &classifiers, knn_k),
        Command::Evaluate {
            embedding,
            lasso,
            models,
            out,
        } => cmd_evaluate(&embedding, &lasso, &models, &out),
        Command::Project {
            embedding,
            out,
            perplexity,
            iterations,
            seed,
            max_points,
        } => cmd_project(
            &embedding,
            &out,
            TsneConfig {
                perplexity,
                iterations,
                seed,
                max_points,
                ..Default::default()
            },
        ),
        Command::Pipeline {
            common,
            embed,
            alpha,
            classifiers,
            knn_k,
            test_frac,
            val_frac,
            n_runs,
            seed,
            tsne,
        } => {
            let mut cfg = build_config(&common, &embed)?;
            if let Some(a) = alpha {
                cfg.alpha = a;
            }
            if let Some(c) = classifiers {
                cfg.classifiers = c;
            }
            if let Some(k) = knn_k {
                cfg.classifier_params.knn_k = k;
            }
            if let Some(f) = test_frac {
                cfg.test_frac = f;
            }
            if let Some(f) = val_frac {
                cfg.val_frac = f;
            }
            if let Some(n) = n_runs {
                cfg.n_runs = n;
            }
            if let Some(s) = seed {
                cfg.seed = s;
                cfg.tsne_config.seed = s;
            }
            cfg.tsne |= tsne;
            cmd_pipeline(&cfg)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Usage => 1,
                ErrorKind::Data => 2,
                ErrorKind::Numerical => 3,
            })
        }
    }
}
