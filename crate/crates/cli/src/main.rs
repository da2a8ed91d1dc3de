use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use shape_eval_core::datagen::{generate_dataset, DatagenConfig};
use shape_eval_core::harness::{
    ingest_dataset, load_benchmark, run_benchmark_with_failures, ConventionSpec, HarnessConfig, Layout, PredictorSpec,
};
use shape_eval_core::io::read_json;
use shape_eval_core::selftest::{run_loss_check, run_selftest, CheckResult};

#[derive(Parser)]
#[command(name = "shape-eval", version, about = "View-centric shape reconstruction evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a source dataset into a unified benchmark directory.
    Ingest {
        #[arg(long)]
        src: PathBuf,
        /// JSON file, inline JSON, or a preset (`unified`, `per-instance`).
        #[arg(long, default_value = "unified")]
        convention: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a predictor on a benchmark directory.
    Run {
        #[arg(long)]
        bench: PathBuf,
        /// Predictor spec JSON; relative directories resolve against its location.
        #[arg(long)]
        predictor: PathBuf,
        /// Harness config JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output stem; `<stem>.json` and `<stem>.csv` are written.
        #[arg(long)]
        report: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the built-in oracle checks.
    Selftest,
    /// Render synthetic depth/mask/projection/SDF samples from meshes.
    Datagen {
        #[arg(long)]
        mesh_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        views_per_object: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// `N` or `WxH`.
        #[arg(long)]
        image_size: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Check loss gradients against finite differences.
    LossCheck,
}

fn parse_convention(s: &str) -> Result<ConventionSpec> {
    let p = Path::new(s);
    if p.is_file() {
        return Ok(read_json(p)?);
    }
    if s.trim_start().starts_with('{') {
        return serde_json::from_str(s).context("parsing inline convention JSON");
    }
    match s {
        "unified" => Ok(ConventionSpec::default()),
        "per-instance" => Ok(ConventionSpec {
            layout: Layout::PerInstance,
            ..Default::default()
        }),
        _ => bail!("convention {s:?} is neither a file, inline JSON, nor a known preset"),
    }
}

fn parse_image_size(s: &str) -> Result<[usize; 2]> {
    let parse = |t: &str| t.trim().parse::<usize>().with_context(|| format!("bad image size {s:?}"));
    match s.split_once(['x', 'X']) {
        Some((w, h)) => Ok([parse(w)?, parse(h)?]),
        None => {
            let n = parse(s)?;
            Ok([n, n])
        }
    }
}

fn load_predictor(path: &Path) -> Result<PredictorSpec> {
    let mut spec: PredictorSpec = read_json(path)?;
    if let PredictorSpec::ExternalMeshDir { dir, .. } = &mut spec {
        if dir.is_relative() {
            *dir = path.parent().unwrap_or(Path::new(".")).join(&*dir);
        }
    }
    Ok(spec)
}

fn print_checks(results: &[CheckResult]) -> bool {
    for r in results {
        println!(
            "{} {:<32} {:>7.2}s  {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.seconds,
            r.detail
        );
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} checks, {failed} failed", results.len());
    failed == 0
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("-".to_string(), |x| format!("{x:.4}"))
}

fn execute(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Ingest { src, convention, out } => {
            let spec = parse_convention(&convention)?;
            let (instances, flagged) = ingest_dataset(&src, &spec, &out)?;
            println!("ingested {} instances into {}", instances.len(), out.display());
            for f in &flagged {
                println!("flagged {} ({:?}): {}", f.instance_id, f.reason, f.message);
            }
            Ok(true)
        }
        Command::Run {
            bench,
            predictor,
            config,
            report,
            seed,
        } => {
            let mut cfg: HarnessConfig = match &config {
                Some(p) => read_json(p)?,
                None => HarnessConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let spec = load_predictor(&predictor)?;
            let (instances, failures) = load_benchmark(&bench)?;
            let r = run_benchmark_with_failures(&instances, failures, &spec, &cfg)?;
            let (json, csv) = r.write(&report)?;
            println!("{} scored, {} failed", r.rows.len(), r.failures.len());
            match &r.overall {
                Some(a) => {
                    let fs: Vec<String> = a.mean_fs.iter().map(|m| format!("FS@{}={:.4}", m.threshold, m.fscore)).collect();
                    println!("mean CD={:.6} {}", a.mean_cd, fs.join(" "));
                }
                None => println!("no successful instances; aggregates absent"),
            }
            for (cat, a) in &r.per_category {
                println!("  {cat}: n={} CD={:.6} FS@0.05={}", a.count, a.mean_cd, fmt_opt(a.fs(0.05)));
            }
            for f in &r.failures {
                println!("  failed {} ({:?}): {}", f.instance_id, f.reason, f.message);
            }
            println!("wrote {} and {}", json.display(), csv.display());
            Ok(true)
        }
        Command::Selftest => Ok(print_checks(&run_selftest())),
        Command::LossCheck => Ok(print_checks(&run_loss_check())),
        Command::Datagen {
            mesh_dir,
            out_dir,
            views_per_object,
            seed,
            image_size,
            config,
        } => {
            let mut cfg: DatagenConfig = match &config {
                Some(p) => read_json(p)?,
                None => DatagenConfig::default(),
            };
            if let Some(v) = views_per_object {
                cfg.views_per_object = v;
            }
            if let Some(s) = seed {
                cfg.camera.seed = s;
            }
            if let Some(s) = &image_size {
                cfg.camera.image_size = parse_image_size(s)?;
            }
            let summary = generate_dataset(&mesh_dir, &out_dir, &cfg)?;
            println!("wrote {} samples to {}", summary.samples.len(), out_dir.display());
            for (id, why) in &summary.skipped {
                println!("skipped {id}: {why}");
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
