use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use nalgebra::DMatrix;
use qbmvae::model::{embed, EmbedKind, QbmVaeModel};
use qbmvae::scmetrics::{
    ami, ari, classify_knn_cv, fmi, graph_connectivity, ilisi, kmeans, knet_entropy, knn_graph, nmi, pca, pcr_r2,
    LabelVector,
};

use crate::config::write_manifest;
use crate::data::DataArgs;
use crate::{CliError, CliResult, OutArgs};

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    /// Checkpoint written by `train`.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// q, zeta or binary.
    #[arg(long, default_value = "q")]
    pub embedding: String,
    /// Neighbors for the kNN graph and the classifier.
    #[arg(long, default_value_t = 15)]
    pub k: usize,
    /// Cross-validation folds for the classifier.
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Principal components used for PCR.
    #[arg(long, default_value_t = 50)]
    pub n_pcs: usize,
    /// k-means restarts.
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    /// Also write embedding.csv.
    #[arg(long)]
    pub write_embedding: bool,
    /// Seed for k-means and the fold assignment.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

/// One `metrics.csv` row.
struct Row {
    metric: &'static str,
    value: Option<f64>,
    direction: &'static str,
    note: String,
}

impl Row {
    fn new(metric: &'static str, value: f64, direction: &'static str) -> Self {
        Self {
            metric,
            value: Some(value),
            direction,
            note: String::new(),
        }
    }

    fn skipped(metric: &'static str, direction: &'static str, note: impl Into<String>) -> Self {
        Self {
            metric,
            value: None,
            direction,
            note: note.into(),
        }
    }
}

const HIGHER: &str = "higher_is_better";
const LOWER: &str = "lower_is_better";

/// Applies the preprocessing recorded in the checkpoint and returns the
/// model-ready dataset.
fn prepare(a: &EvalArgs, model: &QbmVaeModel) -> CliResult<qbmvae::dataio::ExpressionDataset> {
    let meta = |k: &str| {
        model
            .metadata
            .get(k)
            .ok_or_else(|| CliError::Runtime(anyhow::anyhow!("checkpoint has no `{k}` metadata")))
    };
    let genes: Vec<&str> = meta("genes")?.split(',').collect();
    let mut data = a.data.clone();
    data.preprocessed = meta("normalized_input")? == "true";
    data.target_sum = meta("target_sum")?
        .parse()
        .map_err(|e| CliError::Runtime(anyhow::anyhow!("bad target_sum metadata: {e}")))?;
    let ds = data.normalize(a.data.load()?)?;
    Ok(ds.select_genes(&genes)?)
}

/// Batch codes in the model's vocabulary.
fn model_batches(model: &QbmVaeModel, batch: &LabelVector) -> CliResult<Vec<usize>> {
    let vocab: Vec<&str> = model
        .metadata
        .get("batches")
        .map(|s| s.split(',').collect())
        .unwrap_or_default();
    batch
        .labels()
        .iter()
        .map(|&b| {
            let name = batch.name(b);
            vocab
                .iter()
                .position(|v| *v == name)
                .ok_or_else(|| CliError::Runtime(anyhow::anyhow!("batch `{name}` was not seen in training")))
        })
        .collect()
}

pub fn run(a: &EvalArgs, flags: &[(String, String)]) -> CliResult<()> {
    let kind: EmbedKind = a
        .embedding
        .parse()
        .map_err(|e: qbmvae::Error| CliError::Usage(e.to_string()))?;
    if !a.checkpoint.is_file() {
        return Err(CliError::Usage(format!(
            "checkpoint {} does not exist",
            a.checkpoint.display()
        )));
    }
    if a.k == 0 || a.folds < 2 || a.n_pcs == 0 || a.restarts == 0 {
        return Err(CliError::Usage(
            "--k, --n-pcs and --restarts must be positive and --folds at least 2".into(),
        ));
    }
    let model = QbmVaeModel::load(&a.checkpoint)?;
    let ds = prepare(a, &model)?;
    // Only validates; the embedding itself ignores batch.
    model_batches(&model, ds.batch())?;
    let z = embed(ds.matrix(), &model, kind)?;
    let out = a.out.prepare()?;

    let rows = metrics(a, &z, ds.batch(), ds.celltype())?;
    let mut csv = String::from("metric,value,direction,note\n");
    for r in &rows {
        let value = r.value.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(csv, "{},{},{},{}", r.metric, value, r.direction, r.note);
    }
    std::fs::write(out.join("metrics.csv"), csv)?;

    if a.write_embedding {
        let mut e = String::from("cell_id");
        for j in 0..z.ncols() {
            let _ = write!(e, ",z{j}");
        }
        e.push('\n');
        for (i, id) in ds.cell_ids().iter().enumerate() {
            e.push_str(id);
            for j in 0..z.ncols() {
                let _ = write!(e, ",{}", z[(i, j)]);
            }
            e.push('\n');
        }
        std::fs::write(out.join("embedding.csv"), e)?;
    }

    let derived = vec![
        ("n_cells".to_string(), ds.n_cells().to_string()),
        ("latent_dim".to_string(), z.ncols().to_string()),
    ];
    write_manifest(out, "eval", flags, &derived)?;
    for r in &rows {
        if let Some(v) = r.value {
            println!("{:<20} {v:.4}", r.metric);
        }
    }
    Ok(())
}

fn metrics(a: &EvalArgs, z: &DMatrix<f64>, batch: &LabelVector, celltype: Option<&LabelVector>) -> CliResult<Vec<Row>> {
    let n = z.nrows();
    if a.k >= n {
        return Err(CliError::Usage(format!("--k must be below the cell count {n}")));
    }
    let mut rows = Vec::new();
    let graph = knn_graph(z, a.k)?;
    let multi_batch = batch.n_classes() >= 2;

    match celltype {
        Some(ct) => {
            let km = kmeans(z, ct.n_classes().min(n), a.restarts, a.seed)?;
            let clusters = &km.labels;
            rows.push(Row::new("ari", ari(ct, clusters)?, HIGHER));
            rows.push(Row::new("ami", ami(ct, clusters)?, HIGHER));
            rows.push(Row::new("nmi", nmi(ct, clusters)?, HIGHER));
            rows.push(Row::new("fmi", fmi(ct, clusters)?, HIGHER));
            let mut sanity = Row::new("ari_self", ari(clusters, clusters)?, HIGHER);
            sanity.note = "clusters against themselves; must be 1".into();
            rows.push(sanity);
        }
        None => rows.push(Row::skipped(
            "warning",
            "",
            "no celltype labels; label-dependent metrics skipped",
        )),
    }

    if multi_batch {
        rows.push(Row::new("ilisi", ilisi(&graph, batch)?, HIGHER));
    } else {
        rows.push(Row::skipped("ilisi", HIGHER, "single batch"));
    }
    if let Some(ct) = celltype {
        rows.push(Row::new("knet", knet_entropy(&graph, ct)?, LOWER));
        rows.push(Row::new(
            "graph_connectivity",
            graph_connectivity(&graph.symmetrize(), ct)?,
            HIGHER,
        ));
    }
    if multi_batch && batch.n_classes() < n {
        let p = pca(z, a.n_pcs.min(z.ncols()))?;
        rows.push(Row::new("pcr", pcr_r2(&p.scores, &p.explained_variance, batch)?, LOWER));
    } else {
        rows.push(Row::skipped("pcr", LOWER, "single batch"));
    }
    if let Some(ct) = celltype {
        let min_class = ct.counts().into_iter().min().unwrap_or(0);
        if min_class >= a.folds {
            let s = classify_knn_cv(z, ct, a.k, a.folds, a.seed)?;
            rows.push(Row::new("accuracy", s.accuracy, HIGHER));
            rows.push(Row::new("precision", s.macro_precision, HIGHER));
            rows.push(Row::new("recall", s.macro_recall, HIGHER));
            rows.push(Row::new("f1", s.macro_f1, HIGHER));
        } else {
            for m in ["accuracy", "precision", "recall", "f1"] {
                rows.push(Row::skipped(m, HIGHER, "a cell type has fewer cells than folds"));
            }
        }
    }
    Ok(rows)
}
