//! Dataset flags shared by `train` and `eval`.

use std::path::PathBuf;

use clap::Args;
use qbmvae::dataio::{
    ExpressionDataset, MtxPaths, SynthConfig, DEFAULT_MIN_COUNTS, DEFAULT_MIN_GENES, DEFAULT_TARGET_SUM,
};

use crate::{CliError, CliResult};

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Expression CSV: cell_id, one column per gene, batch, optional celltype.
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Directory holding matrix.mtx, genes.txt and labels.csv.
    #[arg(long, value_name = "DIR")]
    pub mtx_dir: Option<PathBuf>,
    /// Generate the synthetic dataset instead of reading one.
    #[arg(long)]
    pub synthetic: bool,
    #[arg(long, default_value_t = 2000)]
    pub cells: usize,
    #[arg(long, default_value_t = 200)]
    pub genes: usize,
    #[arg(long, default_value_t = 4)]
    pub types: usize,
    #[arg(long, default_value_t = 2)]
    pub batches: usize,
    #[arg(long, default_value_t = 0.5)]
    pub batch_strength: f64,
    #[arg(long, default_value_t = 1.0)]
    pub separation: f64,
    /// Seed of the synthetic generator.
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
    /// Input is already log-normalized; skip normalization.
    #[arg(long)]
    pub preprocessed: bool,
    /// Drop low-quality cells before normalizing.
    #[arg(long)]
    pub filter: bool,
    #[arg(long, default_value_t = DEFAULT_MIN_GENES)]
    pub min_genes: usize,
    #[arg(long, default_value_t = DEFAULT_MIN_COUNTS)]
    pub min_counts: f64,
    #[arg(long, default_value_t = DEFAULT_TARGET_SUM)]
    pub target_sum: f64,
}

impl DataArgs {
    /// Reads or generates the raw dataset.
    pub fn load(&self) -> CliResult<ExpressionDataset> {
        let sources = [self.input.is_some(), self.mtx_dir.is_some(), self.synthetic];
        match sources.iter().filter(|&&b| b).count() {
            0 => {
                return Err(CliError::Usage(
                    "one of --input, --mtx-dir or --synthetic is required".into(),
                ))
            }
            1 => {}
            _ => {
                return Err(CliError::Usage(
                    "--input, --mtx-dir and --synthetic are exclusive".into(),
                ))
            }
        }
        if let Some(path) = &self.input {
            if !path.is_file() {
                return Err(CliError::Usage(format!("input file {} does not exist", path.display())));
            }
            return Ok(ExpressionDataset::load_csv(path)?);
        }
        if let Some(dir) = &self.mtx_dir {
            let paths = MtxPaths::in_dir(dir);
            for p in [&paths.matrix, &paths.genes, &paths.labels] {
                if !p.is_file() {
                    return Err(CliError::Usage(format!("input file {} does not exist", p.display())));
                }
            }
            return Ok(ExpressionDataset::load_mtx(&paths)?);
        }
        let cfg = self.synth_config();
        Ok(qbmvae::dataio::synthesize(&cfg).map_err(|e| CliError::Usage(e.to_string()))?)
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            n_cells: self.cells,
            n_genes: self.genes,
            n_types: self.types,
            n_batches: self.batches,
            seed: self.data_seed,
            batch_strength: self.batch_strength,
            separation: self.separation,
        }
    }

    /// Optional cell filter followed by log-normalization, or the
    /// already-normalized marker.
    pub fn normalize(&self, ds: ExpressionDataset) -> CliResult<ExpressionDataset> {
        let ds = if self.filter && !self.preprocessed {
            ds.filter_cells(self.min_genes, self.min_counts)?
        } else {
            ds
        };
        if self.preprocessed {
            Ok(ds.assume_log_normalized())
        } else {
            Ok(ds.normalize_log1p(self.target_sum)?)
        }
    }
}
