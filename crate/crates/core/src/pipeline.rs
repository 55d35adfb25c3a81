//! End-to-end runs: split, select on the training rows, reduce, fit and
//! score every classifier, repeated over seeded runs. Also the on-disk
//! artifact formats shared by the CLI subcommands.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classify::{
    stratified_split, ClassifierKind, ClassifierParams, Knn, SplitPlan, TrainedClassifier,
};
use crate::embedding::{embed_dataset, resolve_spec, DomainKnowledgeTable, EmbeddingSpec};
use crate::error::{Error, Result};
use crate::lasso::{alpha_grid, pick_alpha_one_se, reduce, select_features, LassoModel, LassoParams};
use crate::metrics::{ClassifierReport, EvalReport, RunMetrics};
use crate::projection::{stratified_subsample, tsne, TsneConfig, TsneOutput};
use crate::seqio::{compute_stats, load_sequences, Alphabet, DatasetStats, SequenceRecord};
use crate::sparse::SparseMatrix;

pub const REPORT_FILE: &str = "report.json";
pub const EMBEDDING_FILE: &str = "embedding.txt";
pub const EMBEDDING_SIDECAR: &str = "embedding.json";
pub const LASSO_FILE: &str = "lasso.json";
pub const MODELS_FILE: &str = "models.json";
pub const TSNE_CSV: &str = "tsne.csv";
pub const TSNE_SVG: &str = "tsne.svg";

pub const LEAKAGE_WARNING: &str = "WARNING: domain-knowledge features are derived from the class label. \
They leak the target into the features, so accuracy measured with them on does not reflect \
what the sequences alone can predict.";

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}

/// Lasso strength: fixed, or tuned per run on that run's validation rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AlphaRepr", into = "AlphaRepr")]
pub enum AlphaChoice {
    Fixed(f64),
    Auto,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum AlphaRepr {
    Number(f64),
    Text(String),
}

impl TryFrom<AlphaRepr> for AlphaChoice {
    type Error = Error;

    fn try_from(r: AlphaRepr) -> Result<Self> {
        match r {
            AlphaRepr::Number(a) => Ok(AlphaChoice::Fixed(a)),
            AlphaRepr::Text(s) => s.parse(),
        }
    }
}

impl From<AlphaChoice> for AlphaRepr {
    fn from(a: AlphaChoice) -> Self {
        match a {
            AlphaChoice::Fixed(v) => AlphaRepr::Number(v),
            AlphaChoice::Auto => AlphaRepr::Text("auto".into()),
        }
    }
}

impl FromStr for AlphaChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(AlphaChoice::Auto);
        }
        s.parse::<f64>()
            .map(AlphaChoice::Fixed)
            .map_err(|_| Error::invalid(format!("alpha must be a number or 'auto', got '{s}'")))
    }
}

impl Default for AlphaChoice {
    fn default() -> Self {
        AlphaChoice::Fixed(LassoParams::default().alpha)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub input: PathBuf,
    pub map_unknown: bool,
    pub embedding: EmbeddingSpec,
    /// Domain-knowledge table JSON; the built-in table is used when unset.
    pub domain_table: Option<PathBuf>,
    pub alpha: AlphaChoice,
    pub lasso_tol: f64,
    pub lasso_max_iter: usize,
    pub classifiers: Vec<ClassifierKind>,
    pub classifier_params: ClassifierParams,
    pub test_frac: f64,
    pub val_frac: f64,
    pub n_runs: usize,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub tsne: bool,
    pub tsne_config: TsneConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let lasso = LassoParams::default();
        RunConfig {
            input: PathBuf::new(),
            map_unknown: false,
            embedding: EmbeddingSpec::default(),
            domain_table: None,
            alpha: AlphaChoice::default(),
            lasso_tol: lasso.tol,
            lasso_max_iter: lasso.max_iter,
            classifiers: ClassifierKind::ALL.to_vec(),
            classifier_params: ClassifierParams::default(),
            test_frac: 0.3,
            val_frac: 0.1,
            n_runs: 5,
            seed: 42,
            output_dir: None,
            tsne: false,
            tsne_config: TsneConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        for (name, f) in [("test_frac", self.test_frac), ("val_frac", self.val_frac)] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::invalid(format!("{name} must be in (0, 1), got {f}")));
            }
        }
        if self.n_runs == 0 {
            return Err(Error::invalid("n_runs must be at least 1"));
        }
        if self.classifiers.is_empty() {
            return Err(Error::invalid("at least one classifier is required"));
        }
        if let AlphaChoice::Fixed(a) = self.alpha {
            self.lasso_params(a).validate()?;
        }
        self.embedding.kmer.validate()
    }

    pub fn lasso_params(&self, alpha: f64) -> LassoParams {
        LassoParams {
            alpha,
            tol: self.lasso_tol,
            max_iter: self.lasso_max_iter,
        }
    }

    /// Digest of everything that affects results (input path and output
    /// directory excluded).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.input = PathBuf::new();
        c.output_dir = None;
        crate::short_hash(serde_json::to_string(&c).expect("serializable").as_bytes())
    }

    /// The table to fuse, if domain knowledge is on.
    pub fn domain_table(&self) -> Result<Option<DomainKnowledgeTable>> {
        if !self.embedding.use_domain_knowledge {
            return Ok(None);
        }
        Ok(Some(match &self.domain_table {
            Some(p) => DomainKnowledgeTable::load(p)?,
            None => DomainKnowledgeTable::default_cancer_table(),
        }))
    }
}

/// Identity of an embedding: everything that determines its columns.
pub fn embedding_hash(spec: &EmbeddingSpec, table: Option<&DomainKnowledgeTable>) -> String {
    let payload = serde_json::json!({
        "mode": spec.mode,
        "k": spec.kmer.k,
        "gap": spec.kmer.gap,
        "max_len": spec.max_len,
        "normalize": spec.normalize,
        "domain_knowledge": spec.use_domain_knowledge,
        "alphabet": Alphabet::standard().fingerprint(),
        "domain_table": table.filter(|_| spec.use_domain_knowledge).map(DomainKnowledgeTable::fingerprint),
    });
    crate::short_hash(payload.to_string().as_bytes())
}

pub fn check_provenance(expected: &str, got: Option<&str>, what: &str) -> Result<()> {
    match got {
        Some(h) if h == expected => Ok(()),
        Some(h) => Err(Error::Provenance(format!(
            "{what} was built from embedding {h}, expected {expected}"
        ))),
        None => Err(Error::Provenance(format!("{what} carries no config hash"))),
    }
}

/// Sorted distinct labels and each record's index into them.
pub fn index_labels(labels: &[String]) -> (Vec<String>, Vec<usize>) {
    let names: Vec<String> = labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let y = encode_labels(labels, &names).expect("every label is present");
    (names, y)
}

pub fn encode_labels(labels: &[String], class_names: &[String]) -> Result<Vec<usize>> {
    labels
        .iter()
        .map(|l| {
            class_names
                .binary_search(l)
                .map_err(|_| Error::invalid(format!("label '{l}' was not seen during training")))
        })
        .collect()
}

/// Metadata written next to `embedding.txt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSidecar {
    pub config_hash: String,
    pub spec: EmbeddingSpec,
    pub alphabet_hash: String,
    pub domain_table_hash: Option<String>,
    pub rows: usize,
    pub cols: usize,
    pub nnz: usize,
    pub ids: Vec<String>,
    pub labels: Vec<String>,
}

pub struct Embedded {
    pub matrix: SparseMatrix,
    pub sidecar: EmbeddingSidecar,
}

/// Embeds `records`, resolving `max_len` for positional modes.
pub fn embed_records(
    records: &[SequenceRecord],
    spec: &EmbeddingSpec,
    table: Option<&DomainKnowledgeTable>,
) -> Result<Embedded> {
    let spec = resolve_spec(spec, records);
    let matrix = embed_dataset(records, &spec, table)?;
    let table = table.filter(|_| spec.use_domain_knowledge);
    let sidecar = EmbeddingSidecar {
        config_hash: embedding_hash(&spec, table),
        alphabet_hash: Alphabet::standard().fingerprint(),
        domain_table_hash: table.map(DomainKnowledgeTable::fingerprint),
        rows: matrix.rows(),
        cols: matrix.cols(),
        nnz: matrix.nnz(),
        ids: records.iter().map(|r| r.id.clone()).collect(),
        labels: records.iter().map(|r| r.label.clone()).collect(),
        spec,
    };
    Ok(Embedded { matrix, sidecar })
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    write_file(path, |w| writeln!(w, "{text}"))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line() as u64,
        msg: format!("{}: {e}", path.display()),
    })
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_embedding(dir: &Path, e: &Embedded) -> Result<()> {
    ensure_dir(dir)?;
    write_file(&dir.join(EMBEDDING_FILE), |w| e.matrix.write_triplets(w))?;
    write_json(&dir.join(EMBEDDING_SIDECAR), &e.sidecar)
}

/// Reads `embedding.txt` and its sidecar from `dir` and checks they agree.
pub fn read_embedding(dir: &Path) -> Result<Embedded> {
    let sidecar: EmbeddingSidecar = read_json(&dir.join(EMBEDDING_SIDECAR))?;
    let path = dir.join(EMBEDDING_FILE);
    let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let matrix = SparseMatrix::read_triplets(BufReader::new(file))?;
    if matrix.rows() != sidecar.rows || matrix.cols() != sidecar.cols || sidecar.labels.len() != sidecar.rows {
        return Err(Error::Provenance(format!(
            "{} does not match its sidecar ({}x{} vs {}x{})",
            path.display(),
            matrix.rows(),
            matrix.cols(),
            sidecar.rows,
            sidecar.cols
        )));
    }
    Ok(Embedded { matrix, sidecar })
}

/// Trained classifiers plus what is needed to apply them to new rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub config_hash: String,
    pub class_names: Vec<String>,
    pub n_features: usize,
    pub models: Vec<TrainedClassifier>,
    pub train_time_seconds: Vec<f64>,
}

pub fn train_models(
    x: &SparseMatrix,
    y: &[usize],
    n_classes: usize,
    lasso: &LassoModel,
    kinds: &[ClassifierKind],
    params: &ClassifierParams,
) -> Result<(Vec<TrainedClassifier>, Vec<f64>)> {
    let dense = reduce(x, lasso).stage("reduce")?.to_dense();
    let mut models = Vec::with_capacity(kinds.len());
    let mut times = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let t0 = Instant::now();
        let m = TrainedClassifier::fit(kind, params, dense.view(), y, n_classes).stage(kind.name())?;
        times.push(t0.elapsed().as_secs_f64());
        models.push(m);
    }
    Ok((models, times))
}

pub fn evaluate_models(
    x: &SparseMatrix,
    y: &[usize],
    lasso: &LassoModel,
    models: &[TrainedClassifier],
    train_times: &[f64],
) -> Result<BTreeMap<String, RunMetrics>> {
    let dense = reduce(x, lasso).stage("reduce")?.to_dense();
    let mut out = BTreeMap::new();
    for (m, &t) in models.iter().zip(train_times) {
        let proba = m.predict_proba(dense.view()).stage(m.kind().name())?;
        out.insert(m.kind().name().to_string(), RunMetrics::from_predictions(y, &proba, t)?);
    }
    Ok(out)
}

/// Per-run bookkeeping kept in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub seed: u64,
    pub alpha: f64,
    pub n_selected: usize,
    pub lasso_converged: bool,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub config_hash: String,
    pub embedding_hash: String,
    pub embedding: EmbeddingSpec,
    pub dataset: DatasetStats,
    pub class_names: Vec<String>,
    pub domain_knowledge_leakage: bool,
    pub runs: Vec<RunSummary>,
    #[serde(flatten)]
    pub evaluation: EvalReport,
}

pub struct Projection {
    pub rows: Vec<usize>,
    pub output: TsneOutput,
}

pub struct PipelineOutput {
    pub report: PipelineReport,
    pub splits: Vec<SplitPlan>,
    pub lasso_models: Vec<LassoModel>,
    pub projection: Option<Projection>,
    pub ids: Vec<String>,
    pub labels: Vec<String>,
}

/// Validation accuracy of KNN over the alpha grid, reduced by the
/// one-standard-error rule.
fn tune_alpha(
    cfg: &RunConfig,
    x_train: &SparseMatrix,
    y_train: &[usize],
    x_val: &SparseMatrix,
    y_val: &[usize],
    n_classes: usize,
) -> Result<f64> {
    let mut scores = Vec::new();
    for alpha in alpha_grid() {
        let model = select_features(x_train, y_train, &cfg.lasso_params(alpha))?;
        if model.selected.is_empty() {
            continue;
        }
        let tr = reduce(x_train, &model)?.to_dense();
        let va = reduce(x_val, &model)?.to_dense();
        let knn = Knn::fit(tr.view(), y_train, n_classes, cfg.classifier_params.knn_k)?;
        let pred = crate::classify::argmax_rows(&knn.predict_proba(va.view())?);
        let acc = pred.iter().zip(y_val).filter(|(p, t)| p == t).count() as f64 / y_val.len() as f64;
        log::debug!("alpha {alpha:.1e}: validation accuracy {acc:.4}");
        scores.push((alpha, acc));
    }
    pick_alpha_one_se(&scores, y_val.len()).ok_or(Error::EmptySelection {
        alpha: alpha_grid()[0],
    })
}

pub fn load_input(cfg: &RunConfig) -> Result<Vec<SequenceRecord>> {
    load_sequences(&cfg.input, cfg.map_unknown).stage("load")
}

/// Runs the whole pipeline on in-memory records.
pub fn run_pipeline(cfg: &RunConfig, records: &[SequenceRecord]) -> Result<PipelineOutput> {
    cfg.validate()?;
    let dataset = compute_stats(records).stage("stats")?;
    let table = cfg.domain_table().stage("domain table")?;
    let embedded = embed_records(records, &cfg.embedding, table.as_ref()).stage("embed")?;
    let labels = embedded.sidecar.labels.clone();
    let (class_names, y) = index_labels(&labels);
    let n_classes = class_names.len();
    let x = &embedded.matrix;

    let mut summaries = Vec::with_capacity(cfg.n_runs);
    let mut per_classifier: BTreeMap<String, Vec<RunMetrics>> = BTreeMap::new();
    let mut splits = Vec::with_capacity(cfg.n_runs);
    let mut lasso_models = Vec::with_capacity(cfg.n_runs);

    for run in 0..cfg.n_runs {
        let seed = cfg.seed.wrapping_add(run as u64);
        let plan = stratified_split(&y, cfg.test_frac, cfg.val_frac, seed).stage("split")?;
        let pick = |idx: &[usize]| (x.select_rows(idx), idx.iter().map(|&i| y[i]).collect::<Vec<_>>());
        let (x_train, y_train) = pick(&plan.train_idx);
        let (x_test, y_test) = pick(&plan.test_idx);

        let alpha = match cfg.alpha {
            AlphaChoice::Fixed(a) => a,
            AlphaChoice::Auto => {
                let (x_val, y_val) = pick(&plan.val_idx);
                tune_alpha(cfg, &x_train, &y_train, &x_val, &y_val, n_classes).stage("alpha tuning")?
            }
        };
        let mut model = select_features(&x_train, &y_train, &cfg.lasso_params(alpha)).stage("select")?;
        model.config_hash = Some(embedded.sidecar.config_hash.clone());
        log::info!(
            "run {run}: alpha {alpha:.1e}, {} of {} features selected",
            model.selected.len(),
            model.n_features
        );

        let (models, times) = train_models(
            &x_train,
            &y_train,
            n_classes,
            &model,
            &cfg.classifiers,
            &cfg.classifier_params,
        )?;
        for (name, m) in evaluate_models(&x_test, &y_test, &model, &models, &times)? {
            per_classifier.entry(name).or_default().push(m);
        }
        summaries.push(RunSummary {
            run,
            seed,
            alpha,
            n_selected: model.selected.len(),
            lasso_converged: model.all_converged(),
            n_train: plan.train_idx.len(),
            n_val: plan.val_idx.len(),
            n_test: plan.test_idx.len(),
        });
        splits.push(plan);
        lasso_models.push(model);
    }

    let classifiers = per_classifier
        .into_iter()
        .map(|(k, runs)| Ok((k, ClassifierReport::from_runs(runs)?)))
        .collect::<Result<_>>()?;

    let projection = if cfg.tsne {
        Some(project_embedding(x, &y, &cfg.tsne_config).stage("t-SNE")?)
    } else {
        None
    };

    Ok(PipelineOutput {
        report: PipelineReport {
            config_hash: cfg.hash(),
            embedding_hash: embedded.sidecar.config_hash.clone(),
            embedding: embedded.sidecar.spec.clone(),
            dataset,
            class_names,
            domain_knowledge_leakage: cfg.embedding.use_domain_knowledge,
            runs: summaries,
            evaluation: EvalReport {
                n_runs: cfg.n_runs,
                classifiers,
            },
        },
        splits,
        lasso_models,
        projection,
        ids: embedded.sidecar.ids,
        labels,
    })
}

/// t-SNE of a (subsampled) sparse embedding. Only columns occupied in the
/// subsample are densified; empty columns do not change distances.
pub fn project_embedding(x: &SparseMatrix, y: &[usize], cfg: &TsneConfig) -> Result<Projection> {
    let rows = stratified_subsample(y, cfg.max_points, cfg.seed);
    let sub = x.select_rows(&rows);
    let view = sub.occupied_columns();
    let dense = sub.select_columns(view.columns())?.to_dense();
    let output = tsne(dense.view(), cfg)?;
    Ok(Projection { rows, output })
}

pub fn write_projection(dir: &Path, p: &Projection, ids: &[String], labels: &[String]) -> Result<()> {
    let (class_names, y) = index_labels(labels);
    let sub_ids: Vec<String> = p.rows.iter().map(|&i| ids[i].clone()).collect();
    let sub_labels: Vec<String> = p.rows.iter().map(|&i| labels[i].clone()).collect();
    let sub_y: Vec<usize> = p.rows.iter().map(|&i| y[i]).collect();
    let emb = p.output.embedding.view();
    crate::projection::write_projection_csv(&dir.join(TSNE_CSV), &sub_ids, emb, &sub_labels)?;
    crate::projection::write_scatter_svg(emb, &sub_y, &class_names, &dir.join(TSNE_SVG))
}

/// Writes `report.json`, `lasso.json` (first run's model) and, when
/// present, the t-SNE outputs.
pub fn write_pipeline_outputs(dir: &Path, out: &PipelineOutput) -> Result<()> {
    ensure_dir(dir)?;
    write_json(&dir.join(REPORT_FILE), &out.report)?;
    if let Some(m) = out.lasso_models.first() {
        write_json(&dir.join(LASSO_FILE), m)?;
    }
    if let Some(p) = &out.projection {
        write_projection(dir, p, &out.ids, &out.labels)?;
    }
    Ok(())
}

/// Removes every wall-clock field, for run-to-run comparisons.
pub fn strip_timing(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Object(map) => {
            map.retain(|k, _| !k.ends_with("time_seconds"));
            map.values_mut().for_each(strip_timing);
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}
