use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use nwot::applications::{self, DEFAULT_LOW_RATIO};
use nwot::io::{self, ClusterReport, FitReport, Report, WassersteinReport};
use nwot::{
    clustering, datagen, fitting, mode_count, ComponentModel, Exponent, FitConfig, NwConfig,
};

const AFTER_HELP: &str = "\
Exit codes:
  0   success
  2   error (one line `error: <message>` on standard error)
  10  compare: same distribution
  11  compare: same components, different proportions
  12  compare: different components

NWOT_THREADS caps the number of worker threads.";

#[derive(Parser)]
#[command(name = "nwot", version, about = "Normalized Wasserstein measure for mixture distributions", after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a named preset to a labeled CSV file.
    Gen {
        #[arg(long)]
        preset: String,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact Wasserstein value between two point files.
    Wasserstein {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 1)]
        p: u8,
        /// Write the optimal plan as `source,target,mass` rows.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// NW measure between two point files.
    Nw {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        k: usize,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Fit a k-component mixture to one point file.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0.0)]
        lambda_reg: f64,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// NW(k) for every k in a range and the selected number of modes.
    Sweep {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        kmin: usize,
        #[arg(long)]
        kmax: usize,
        /// Override the "NW(k) is small" threshold.
        #[arg(long)]
        small: Option<f64>,
        /// Override the "NW(k−1) − NW(k) is large" threshold.
        #[arg(long)]
        gap: Option<f64>,
        #[command(flatten)]
        solver: SolverArgs,
        /// Plot-ready `k,nw,first_diff` rows.
        #[arg(long, default_value = "nw_vs_k.csv")]
        csv: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Fit a mixture and label every point with its nearest component.
    Cluster {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0.0)]
        lambda_reg: f64,
        #[command(flatten)]
        solver: SolverArgs,
        /// Per-point `label,distance` rows.
        #[arg(long, default_value = "labels.csv")]
        labels_out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Tell proportion shifts from component shifts; the exit code encodes the verdict.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        k: usize,
        /// W below this means the same distribution [default: 0.05·diameter^p].
        #[arg(long)]
        low_w: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_LOW_RATIO)]
        low_ratio: f64,
        #[command(flatten)]
        solver: SolverArgs,
        /// Exit with 0 instead of the verdict code.
        #[arg(long)]
        exit_zero: bool,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Reweight the classes of a labeled source towards a labeled target.
    DaDemo {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, default_value_t = 1)]
        p: u8,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Affine,
    Free,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, default_value_t = 1)]
    p: u8,
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 32)]
    points_per_component: usize,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Lower bound on every proportion.
    #[arg(long, default_value_t = 0.0)]
    proportion_floor: f64,
    #[arg(long, value_enum, default_value_t = Model::Affine)]
    model: Model,
}

impl SolverArgs {
    fn nw(&self, k: usize) -> nwot::Result<NwConfig> {
        let cfg = NwConfig {
            k,
            exponent: exponent(self.p)?,
            max_outer_iters: self.max_iters,
            tol: self.tol,
            proportion_floor: self.proportion_floor,
            seed: self.seed,
            restarts: self.restarts,
            points_per_component: self.points_per_component,
            component_model: match self.model {
                Model::Affine => ComponentModel::Affine,
                Model::Free => ComponentModel::FreeSupport,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn fit(&self, k: usize, lambda_reg: f64) -> nwot::Result<FitConfig> {
        let nw = self.nw(k)?;
        let cfg = FitConfig {
            k,
            exponent: nw.exponent,
            lambda_reg,
            points_per_component: nw.points_per_component,
            max_outer_iters: nw.max_outer_iters,
            tol: nw.tol,
            seed: nw.seed,
            restarts: nw.restarts,
            proportion_floor: nw.proportion_floor,
            component_model: nw.component_model,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn exponent(p: u8) -> nwot::Result<Exponent> {
    Exponent::try_from(p as f64)
}

fn load(path: &Path) -> nwot::Result<io::PointsFile> {
    let file = io::read_points(path).map_err(|e| match e {
        nwot::Error::EmptyDataset => e,
        e => nwot::Error::Format(format!("{}: {e}", path.display())),
    })?;
    if file.renormalized {
        eprintln!("warning: weights in {} renormalized to sum to one", path.display());
    }
    Ok(file)
}

fn labels_of(file: &io::PointsFile, path: &Path) -> nwot::Result<Vec<usize>> {
    file.labels
        .clone()
        .ok_or_else(|| nwot::Error::Format(format!("{}: a `label` column is required", path.display())))
}

fn save<C: serde::Serialize, R: serde::Serialize>(
    path: &Option<PathBuf>,
    command: &str,
    config: C,
    results: R,
) -> nwot::Result<()> {
    match path {
        Some(p) => io::write_report(p, &Report::new(command, config, results)),
        None => Ok(()),
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn run(cli: Cli) -> nwot::Result<u8> {
    match cli.command {
        Command::Gen { preset, n, seed, out } => {
            let (data, labels) = datagen::preset(&preset, n, seed)?;
            io::write_points(&out, &data, Some(&labels))?;
            println!("wrote {n} points to {}", out.display());
        }
        Command::Wasserstein { a, b, p, plan, report } => {
            let (x, y) = (load(&a)?.data, load(&b)?.data);
            let exponent = exponent(p)?;
            let (value, transport) = nwot::wasserstein(&x, &y, exponent)?;
            println!("{value}");
            if let Some(path) = &plan {
                io::write_plan(path, &transport)?;
            }
            let config = json!({ "a": a, "b": b, "p": exponent });
            save(&report, "wasserstein", config, WassersteinReport { value, plan: transport })?;
        }
        Command::Nw { a, b, k, solver, report } => {
            let (x, y) = (load(&a)?.data, load(&b)?.data);
            let cfg = solver.nw(k)?;
            let r = nwot::nw_measure(&x, &y, &cfg)?;
            println!("nw = {}", r.value);
            println!("pi1 = {}", fmt_vec(r.pi1.as_slice()));
            println!("pi2 = {}", fmt_vec(r.pi2.as_slice()));
            save(&report, "nw", json!({ "a": a, "b": b, "nw": cfg }), r)?;
        }
        Command::Fit { data, k, lambda_reg, solver, report } => {
            let file = load(&data)?;
            let cfg = solver.fit(k, lambda_reg)?;
            let fit = fitting::fit_mixture(&file.data, &cfg)?;
            println!("objective = {}", fit.objective);
            println!("pi = {}", fmt_vec(fit.model.proportions().as_slice()));
            let metrics = match &file.labels {
                Some(labels) => {
                    let (truth, true_pi) = fitting::empirical_truth(&file.data, labels)?;
                    if truth.len() == k {
                        let m = fitting::evaluate_fit(&fit.model, &truth, &true_pi)?;
                        println!("pi_error = {}", m.pi_error);
                        println!("avg_mean_error = {}", m.avg_mean_error);
                        println!("avg_covariance_error = {}", m.avg_covariance_error);
                        Some(m)
                    } else {
                        eprintln!("warning: {} labels but k = {k}; metrics skipped", truth.len());
                        None
                    }
                }
                None => None,
            };
            save(&report, "fit", json!({ "data": data, "fit": cfg }), FitReport { lambda_reg, fit, metrics })?;
        }
        Command::Sweep { a, b, kmin, kmax, small, gap, solver, csv, report } => {
            let (x, y) = (load(&a)?.data, load(&b)?.data);
            let cfg = solver.nw(kmin)?;
            let thresholds = mode_count::SweepThresholds { small, gap };
            let r = mode_count::nw_sweep_with(&x, &y, kmin, kmax, &cfg, thresholds)?;
            for (k, v) in r.ks.iter().zip(&r.nw_values) {
                println!("k = {k:>3}  nw = {v}");
            }
            let tag = if r.heuristic { " (heuristic)" } else { "" };
            println!("selected k = {}{tag}", r.selected_k);
            if !r.monotone_violations.is_empty() {
                eprintln!("warning: NW(k) increased by more than 5% at k = {:?}", r.monotone_violations);
            }
            io::write_sweep_csv(&csv, &r)?;
            let config = json!({ "a": a, "b": b, "kmin": kmin, "kmax": kmax, "small": small, "gap": gap, "nw": cfg });
            save(&report, "sweep", config, r)?;
        }
        Command::Cluster { data, k, lambda_reg, solver, labels_out, report } => {
            let file = load(&data)?;
            let cfg = solver.fit(k, lambda_reg)?;
            let (fit, assignment) = clustering::cluster(&file.data, &cfg)?;
            let mut cluster_sizes = vec![0; k];
            for &l in &assignment.labels {
                cluster_sizes[l] += 1;
            }
            println!("cluster sizes = {cluster_sizes:?}");
            let scores = match &file.labels {
                Some(truth) => {
                    let s = clustering::score(&assignment.labels, truth)?;
                    println!("purity = {}\nnmi = {}\nari = {}", s.purity, s.nmi, s.ari);
                    Some(s)
                }
                None => None,
            };
            io::write_assignment(&labels_out, &assignment)?;
            let results = ClusterReport { lambda_reg, fit, cluster_sizes, scores };
            save(&report, "cluster", json!({ "data": data, "fit": cfg }), results)?;
        }
        Command::Compare { a, b, k, low_w, low_ratio, solver, exit_zero, report } => {
            let (x, y) = (load(&a)?.data, load(&b)?.data);
            let cfg = solver.nw(k)?;
            let low_w = low_w.unwrap_or_else(|| applications::default_low_w(&x, &y, cfg.exponent));
            let v = applications::comparative_test(&x, &y, &cfg, low_w, low_ratio)?;
            println!("wasserstein = {}\nnw = {}\nratio = {}", v.wasserstein, v.nw, v.ratio);
            println!("verdict = {}", serde_json::to_value(v.verdict)?.as_str().unwrap_or_default());
            let code = if exit_zero { 0 } else { v.verdict.exit_code() as u8 };
            let config = json!({ "a": a, "b": b, "low_w": low_w, "low_ratio": low_ratio, "nw": cfg });
            save(&report, "compare", config, v)?;
            return Ok(code);
        }
        Command::DaDemo { source, target, p, report } => {
            let s = load(&source)?;
            let t = load(&target)?;
            let classes = applications::split_by_label(&s.data, &labels_of(&s, &source)?)?;
            let exponent = exponent(p)?;
            let r = applications::da_reweight(&classes, &t.data, &labels_of(&t, &target)?, exponent)?;
            println!("estimated_pi = {}", fmt_vec(r.estimated_pi.as_slice()));
            println!("objective = {} (pooled {})", r.objective, r.baseline_objective);
            println!("cross_mode_mass = {} (pooled {})", r.cross_mode_mass, r.baseline_cross_mode_mass);
            save(&report, "da-demo", json!({ "source": source, "target": target, "p": exponent }), r)?;
        }
    }
    Ok(0)
}

fn configure_threads() -> nwot::Result<()> {
    if let Ok(v) = std::env::var("NWOT_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| nwot::Error::InvalidConfig(format!("NWOT_THREADS must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| nwot::Error::InvalidConfig(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("error: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match configure_threads().and_then(|_| run(cli)) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(2)
        }
    }
}
