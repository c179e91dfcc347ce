use std::path::PathBuf;
use std::time::Instant;

use anyhow::Result;
use clap::{Args, ValueEnum};
use serde::Serialize;
use velocam::cues::FeatureVector;
use velocam::dataset::write_json;
use velocam::ensemble::{AreaSplitConfig, Profile, RangeEnsemble};
use velocam::regressor::{check_random_topologies, Mlp, MlpTopology, RegressorModel, Standardization, TrainMeta};
use velocam::synthcam::{render_sequence, SceneSpec, VehicleSpec};
use velocam::tracker::{build_pyramid, median_flow_step_pyr};

use super::invalid;
use crate::config::PipelineConfig;

#[derive(Debug, Args)]
pub struct CheckGradArgs {
    /// Floating-point width: 64 (ε = 1e-5, tolerance 1e-6) or 32 (ε = 1e-3, tolerance 1e-3).
    #[arg(long, default_value_t = 64)]
    pub bits: u32,
    /// Random topologies to check.
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
}

pub fn check_grad(args: &CheckGradArgs, seed: u64) -> Result<()> {
    let (worst, tolerance) = match args.bits {
        64 => (check_random_topologies::<f64>(args.trials, seed, 1e-5)?, 1e-6),
        32 => (check_random_topologies::<f32>(args.trials, seed, 1e-3)?, 1e-3),
        b => return Err(invalid(format!("--bits must be 32 or 64, got {b}"))),
    };
    println!("max relative error {worst:.3e} over {} topologies ({}-bit)", args.trials, args.bits);
    if !(worst < tolerance) {
        return Err(invalid(format!("gradient deviation {worst:.3e} exceeds {tolerance:.0e}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchTarget {
    /// One Median Flow step (next-frame pyramid plus point tracking) on 1280×720 frames.
    Track,
    /// Five-model 4×70 ensemble prediction for one vehicle.
    Mlp,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(value_enum)]
    pub target: BenchTarget,
    #[arg(long, default_value_t = 200)]
    pub iterations: usize,
    /// Also write the timings as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct BenchReport {
    pub target: BenchTarget,
    pub iterations: usize,
    pub median_ms: f64,
    pub mean_ms: f64,
    pub p90_ms: f64,
}

fn summarize(target: BenchTarget, mut ms: Vec<f64>) -> BenchReport {
    let mean_ms = ms.iter().sum::<f64>() / ms.len() as f64;
    ms.sort_by(f64::total_cmp);
    BenchReport {
        target,
        iterations: ms.len(),
        median_ms: ms[ms.len() / 2],
        mean_ms,
        p90_ms: ms[(ms.len() * 9 / 10).min(ms.len() - 1)],
    }
}

fn bench_track(iterations: usize, cfg: &PipelineConfig) -> Result<Vec<f64>> {
    let vehicle = VehicleSpec {
        x: 1.2,
        z: 22.0,
        vx: -0.4,
        vz: -3.0,
        width_m: 1.8,
        height_m: 1.5,
        texture_seed: 11,
    };
    let mut spec = SceneSpec::new(1280, 720, 5, vec![vehicle]);
    spec.frames = 8;
    let (seq, truth) = render_sequence(&spec)?;
    let boxes = &truth.vehicles[0].boxes;
    let n = seq.len();
    let mut ms = Vec::with_capacity(iterations);
    let mut prev = build_pyramid(&seq.frames[n - 1], cfg.tracker.pyramid_levels)?;
    let mut t = n - 1;
    for _ in 0..iterations {
        let next_t = if t == 0 { n - 1 } else { t - 1 };
        let start = Instant::now();
        let next = build_pyramid(&seq.frames[next_t], cfg.tracker.pyramid_levels)?;
        let step = median_flow_step_pyr(&prev, &next, &boxes[t], &cfg.tracker)?;
        ms.push(start.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(step);
        prev = next;
        t = next_t;
    }
    Ok(ms)
}

fn bench_mlp(iterations: usize) -> Result<Vec<f64>> {
    use rand::SeedableRng;
    let input_dim = 57;
    let topology = MlpTopology::new(input_dim, 4, 70)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let models = (0..5)
        .map(|k| {
            RegressorModel::new(
                "bench".into(),
                Standardization::identity(input_dim),
                Mlp::<f64>::glorot(topology, &mut rng),
                TrainMeta {
                    seed: k,
                    best_epoch: 0,
                    val_mse: 0.0,
                },
            )
        })
        .collect::<velocam::Result<Vec<_>>>()?;
    let ensemble = RangeEnsemble::new(AreaSplitConfig::new(1e4, 1e3)?, Profile::Full, [vec![], vec![], models])?;
    let fv = FeatureVector {
        layout_version: "bench".into(),
        values: (0..input_dim).map(|i| (i as f64 * 0.37).sin()).collect(),
    };
    let mut ms = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let start = Instant::now();
        let p = ensemble.predict(&fv, 500.0)?;
        ms.push(start.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(p);
    }
    Ok(ms)
}

pub fn bench(args: &BenchArgs, cfg: &PipelineConfig) -> Result<()> {
    if args.iterations == 0 {
        return Err(invalid("--iterations must be positive"));
    }
    let ms = match args.target {
        BenchTarget::Track => bench_track(args.iterations, cfg)?,
        BenchTarget::Mlp => bench_mlp(args.iterations)?,
    };
    let report = summarize(args.target, ms);
    let unit = match args.target {
        BenchTarget::Track => "per frame",
        BenchTarget::Mlp => "per vehicle",
    };
    println!(
        "{:?}: median {:.3} ms {unit} (mean {:.3}, p90 {:.3}) over {} runs",
        report.target, report.median_ms, report.mean_ms, report.p90_ms, report.iterations
    );
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    Ok(())
}
