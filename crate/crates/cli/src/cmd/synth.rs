use clap::Args;
use qbmvae::dataio::{synthesize, MtxPaths, SynthConfig};

use crate::config::write_manifest;
use crate::{CliError, CliResult, OutArgs};

#[derive(Args, Debug, Clone)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    pub cells: usize,
    #[arg(long, default_value_t = 200)]
    pub genes: usize,
    #[arg(long, default_value_t = 4)]
    pub types: usize,
    #[arg(long, default_value_t = 2)]
    pub batches: usize,
    /// Log-scale spread of the per-batch gene factors.
    #[arg(long, default_value_t = 0.5)]
    pub batch_strength: f64,
    /// Log-scale spread of the per-type gene factors.
    #[arg(long, default_value_t = 1.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write matrix.mtx, genes.txt and labels.csv.
    #[arg(long)]
    pub mtx: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn run(a: &SynthArgs, flags: &[(String, String)]) -> CliResult<()> {
    let cfg = SynthConfig {
        n_cells: a.cells,
        n_genes: a.genes,
        n_types: a.types,
        n_batches: a.batches,
        seed: a.seed,
        batch_strength: a.batch_strength,
        separation: a.separation,
    };
    let ds = synthesize(&cfg).map_err(|e| CliError::Usage(e.to_string()))?;
    let out = a.out.prepare()?;
    ds.save_csv(&out.join("synthetic.csv"))?;
    if a.mtx {
        ds.save_mtx(&MtxPaths::in_dir(out))?;
    }
    write_manifest(out, "synth", flags, &[])?;
    println!(
        "wrote {} cells x {} genes to {}",
        ds.n_cells(),
        ds.n_genes(),
        out.display()
    );
    Ok(())
}
