use std::io::Write as _;
use std::path::PathBuf;

use clap::Args;
use qbmvae_service::{serve, ServerConfig};

use crate::config::write_manifest;
use crate::{CliError, CliResult};

#[derive(Args, Debug, Clone)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// 0 picks a free port; the bound address is printed.
    #[arg(long, default_value_t = 0)]
    pub port: u16,
    /// Largest accepted variable count.
    #[arg(long, default_value_t = 1024)]
    pub max_problem_size: usize,
    /// Concurrent sampling jobs; defaults to the core count.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Write a manifest here. A server produces no other files.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(a: &ServeArgs, flags: &[(String, String)]) -> CliResult<()> {
    let mut cfg = ServerConfig {
        max_problem_size: a.max_problem_size,
        ..ServerConfig::default()
    };
    if let Some(w) = a.workers {
        if w == 0 {
            return Err(CliError::Usage("--workers must be positive".into()));
        }
        cfg.worker_count = w;
    }
    if a.max_problem_size == 0 {
        return Err(CliError::Usage("--max-problem-size must be positive".into()));
    }
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir)?;
        write_manifest(dir, "serve", flags, &[])?;
    }
    let addr = format!("{}:{}", a.host, a.port);
    serve(&addr, cfg, |bound| {
        println!("listening on {bound}");
        let _ = std::io::stdout().flush();
    })?;
    Ok(())
}
