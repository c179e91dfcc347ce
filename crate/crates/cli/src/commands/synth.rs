use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use velocam::synthcam::{generate_dataset, DistanceProfile};

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of sequences.
    #[arg(long)]
    pub n: usize,
    /// Near/medium/far mix: `default` (12/65/23), `uniform`, or three weights `a,b,c`.
    #[arg(long, default_value = "default")]
    pub profile: String,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 1280)]
    pub width: usize,
    #[arg(long, default_value_t = 720)]
    pub height: usize,
}

pub fn run(args: &SynthArgs, seed: u64) -> Result<()> {
    let profile = DistanceProfile::parse(&args.profile)?;
    let index = generate_dataset(&args.out_dir, args.n, &profile, seed, args.width, args.height)?;
    eprintln!("wrote {} sequences, index {}", args.n, index.display());
    Ok(())
}
