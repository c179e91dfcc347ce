use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use velocam::dataset::{read_json, write_atomic, write_json};
use velocam::evaluation::{evaluate_dataset, report_svg, Prediction};

use super::dataset;

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Predictions JSON from `predict`.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Labelled dataset index or manifest.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Report JSON to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a per-range bar plot.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

fn fmt(e: Option<f64>) -> String {
    e.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

pub fn run(args: &EvaluateArgs) -> Result<()> {
    let predictions: Vec<Prediction> = read_json(&args.predictions)?;
    let truth: Vec<_> = dataset(&args.dataset)?
        .iter()
        .flat_map(|lm| {
            let m = &lm.manifest;
            m.annotations.iter().enumerate().map(|(i, a)| (m.vehicle_id(i), a.clone()))
        })
        .collect();
    let report = evaluate_dataset(&predictions, &truth)?;
    write_json(&args.out, &report)?;
    if let Some(svg) = &args.svg {
        write_atomic(svg, report_svg(&report).as_bytes())?;
    }
    eprintln!(
        "E_near {} ({}), E_medium {} ({}), E_far {} ({}), E_V {}",
        fmt(report.e_near),
        report.counts.near,
        fmt(report.e_medium),
        report.counts.medium,
        fmt(report.e_far),
        report.counts.far,
        fmt(report.e_v)
    );
    Ok(())
}
