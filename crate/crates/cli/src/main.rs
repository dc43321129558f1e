//! Command-line front end: deterministic simulation runs, density point
//! evaluation, the verification suite, and the convergence harness.

mod config;
mod density_cmd;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::{parse_config, RunConfig};
use vrjp_sigma_core::harness::{
    self, compare_fluctuations, compare_single_time, default_scan_point, density_ratio_scan,
    SingleScaleSample, TestReport,
};
use vrjp_sigma_core::harness::limit::LimitLaw;
use vrjp_sigma_core::simulate::{simulate_two_scales, simulate_vrjp, time_change, trajectory_rng};
use vrjp_sigma_core::suite;

#[derive(Parser)]
#[command(
    name = "vrjp-sigma",
    about = "Simulator and exact-density toolkit for the time-changed vertex-reinforced jump process",
    version
)]
struct Cli {
    /// Worker threads for ensembles (speed only; results are identical).
    /// The VRJP_SIGMA_THREADS environment variable takes precedence.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an ensemble of two-window trajectories and write the
    /// observables CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Override the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a named density at the point given in the config.
    Density {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the verification suite; exits 0 only if every gate passes.
    Verify {
        /// Shrink the Monte Carlo sizes for a quick smoke run.
        #[arg(long)]
        quick: bool,
    },
    /// Run the convergence harness on the configured graph and emit the
    /// JSON report and CSV summaries.
    Converge {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = std::env::var("VRJP_SIGMA_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .or(cli.threads);
    if let Some(t) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: could not configure {t} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Simulate { config, seed, out } => cmd_simulate(config, *seed, out.as_deref()),
        Command::Density { config } => cmd_density(config),
        Command::Verify { quick } => return cmd_verify(*quick),
        Command::Converge { config, seed, out } => cmd_converge(config, *seed, out.as_deref()),
    };
    match result {
        Ok(all_passed) => {
            if all_passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage_class = e.downcast_ref::<config::ConfigError>().is_some();
            ExitCode::from(if usage_class { 2 } else { 1 })
        }
    }
}

fn load(config_path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<(RunConfig, PathBuf)> {
    let text = std::fs::read_to_string(config_path)
        .with_context(|| format!("reading config {}", config_path.display()))?;
    let mut cfg = parse_config(&text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.out_dir = Some(o.to_path_buf());
    }
    let out_dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    Ok((cfg, out_dir))
}

fn cmd_simulate(config_path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<bool> {
    let (cfg, out_dir) = load(config_path, seed, out)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let g = cfg.load_graph(base)?;
    let i0 = cfg.i0_for(&g)?;
    let sigma = cfg.sigma;
    let sigma_prime = cfg.sigma_prime();

    let mut csv = output::observables_header(&g);
    csv.push('\n');
    use rayon::prelude::*;
    let rows: Vec<String> = (0..cfg.n as u64)
        .into_par_iter()
        .map(|idx| {
            let mut rng = trajectory_rng(cfg.seed, idx);
            let rec = simulate_two_scales(&g, i0, sigma, sigma_prime, &mut rng);
            output::observables_row(&g, i0, idx, &rec)
        })
        .collect();
    for row in rows {
        csv.push_str(&row);
        csv.push('\n');
    }
    let path = out_dir.join("observables.csv");
    std::fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());

    if cfg.trajectory_dump > 0 {
        let mut dump = String::from("trajectory,event_index,Y_time,Z_time,from,to\n");
        for idx in 0..cfg.trajectory_dump.min(cfg.n) as u64 {
            let rng = trajectory_rng(cfg.seed, idx);
            // Raw horizon long enough to cover both windows in changed time.
            let mut t_max = 2.0 * (sigma + sigma_prime).sqrt() + 4.0;
            let tc = loop {
                let traj = simulate_vrjp(&g, i0, t_max, &mut rng.clone());
                let tc = time_change(&g, &traj);
                if tc.final_z_time >= sigma + sigma_prime {
                    break tc;
                }
                t_max *= 2.0;
            };
            for (e, ev) in tc
                .events
                .iter()
                .take_while(|ev| ev.z_time <= sigma + sigma_prime)
                .enumerate()
            {
                dump.push_str(&format!(
                    "{idx},{e},{},{},{},{}\n",
                    output::fmt_real(ev.y_time),
                    output::fmt_real(ev.z_time),
                    ev.from,
                    ev.to
                ));
            }
        }
        let path = out_dir.join("trajectories.csv");
        std::fs::write(&path, dump).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(true)
}

fn cmd_density(config_path: &Path) -> Result<bool> {
    let text = std::fs::read_to_string(config_path)
        .with_context(|| format!("reading config {}", config_path.display()))?;
    let cfg = parse_config(&text)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let g = cfg.load_graph(base)?;
    let req = cfg
        .density
        .as_ref()
        .context("config has no `density` request")?;
    let value = density_cmd::evaluate(&g, req)?;
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(true)
}

fn cmd_verify(quick: bool) -> ExitCode {
    let t0 = Instant::now();
    let reports = suite::run_suite(quick);
    let mut all = true;
    for r in &reports {
        output::print_report_line(r);
        if suite::is_gating(r) {
            all &= r.passed;
        }
    }
    let gating: Vec<_> = reports.iter().filter(|r| suite::is_gating(r)).collect();
    println!(
        "verify: {}/{} gates passed in {:.1?}{}",
        gating.iter().filter(|r| r.passed).count(),
        gating.len(),
        t0.elapsed(),
        if quick { " (quick profile)" } else { "" }
    );
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn cmd_converge(config_path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<bool> {
    let (cfg, out_dir) = load(config_path, seed, out)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let g = cfg.load_graph(base)?;
    let i0 = cfg.i0_for(&g)?;
    let sigma = cfg.sigma;
    let sigma_prime = cfg.sigma_prime();

    let t0 = Instant::now();
    let ens = harness::run_ensemble(&g, i0, sigma, sigma_prime, cfg.n, cfg.seed);
    output::ensemble_summary_lines(&ens);
    let mut reports: Vec<TestReport> = Vec::new();

    if g.vertex_count() <= 3 {
        let law = LimitLaw::compute(&g, i0);
        let single: Vec<SingleScaleSample> = ens
            .samples
            .iter()
            .filter_map(|s| match s {
                harness::SampleOutcome::InO(r) => Some(SingleScaleSample::from_rescaled(&g, r)),
                harness::SampleOutcome::NotInO => None,
            })
            .collect();
        reports.extend(compare_single_time(&single, &g, &law, cfg.alpha, cfg.seed));
        reports.extend(compare_fluctuations(&ens, &g, cfg.alpha));
    } else {
        println!(
            "note: exact limit-law comparisons are tabulated for graphs with at most 3 vertices; \
             emitting summaries and the ratio scan only"
        );
    }
    if i0 == g.root() {
        let point = default_scan_point(&g, i0);
        reports.push(density_ratio_scan(
            &g,
            i0,
            &[10.0, 100.0, 1000.0],
            &point,
        ));
    }
    let mut all = true;
    for r in &reports {
        output::print_report_line(r);
        all &= r.passed;
    }
    let reports_path = out_dir.join("reports.json");
    std::fs::write(&reports_path, output::reports_json(&reports))
        .with_context(|| format!("writing {}", reports_path.display()))?;
    let summaries_path = out_dir.join("summaries.csv");
    std::fs::write(&summaries_path, output::summaries_csv(&ens.summaries))
        .with_context(|| format!("writing {}", summaries_path.display()))?;
    println!(
        "wrote {} and {} in {:.1?}",
        reports_path.display(),
        summaries_path.display(),
        t0.elapsed()
    );
    Ok(all)
}
