//! Command-line front end: the same operations as the library, driven by a
//! TOML config.
//!
//! Exit codes: 0 success, 1 usage or runtime error, 2 warnings escalated by
//! `--strict`, 3 consistency-check failure.

pub mod config;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::grid::Grid;
use crate::mc::{self, InitialLaw};
use crate::model::{ClassifyParams, QsdVerdict};
use crate::renewal::{self, GridMeasure, IterateOptions, MomentLedger};
use crate::{eigen, Result};

use config::Config;
use report::CsvReport;

#[derive(Parser)]
#[command(
    name = "qsd-lab",
    version,
    about = "Quasi-stationary distributions of one-dimensional diffusions absorbed at 0"
)]
struct Cli {
    /// TOML config; omitted means Brownian motion with unit drift on an
    /// automatically chosen grid.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the report here instead of stdout (or $QSD_LAB_OUT/<cmd>.csv).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Escalate warnings to exit code 2.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Classify both boundaries and report how many QSDs exist.
    Classify,
    /// Spectral bottom of the killed generator on the truncated grid.
    Lambda0,
    /// Eigenfunction psi_lambda at the grid nodes.
    Eigen {
        /// Signed spectral parameter; negative values give the QSD family
        /// psi_{-|lambda|}.
        #[arg(long, allow_hyphen_values = true)]
        lambda: f64,
    },
    /// The QSD nu_lambda = lambda psi_{-lambda} dm.
    Qsd {
        /// Absorption rate in (0, lambda0]; defaults to lambda0 (the
        /// minimal QSD).
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Iterate the renewal transform with spectral diagnostics.
    Iterate {
        #[arg(long, default_value = "dirac x=1")]
        init: String,
        #[arg(long, default_value_t = 20)]
        steps: usize,
        #[arg(long, default_value_t = 1)]
        track_every: usize,
    },
    /// Sample absorption times by Monte Carlo.
    Simulate {
        #[arg(long, default_value = "dirac x=1")]
        init: String,
    },
    /// Cross-check spectral, renewal and Monte Carlo answers against each
    /// other; any failure exits with code 3.
    Check {
        #[arg(long, default_value = "dirac x=1")]
        init: String,
        /// Tolerance for pairwise agreement of the absorption-rate
        /// estimators.
        #[arg(long, default_value_t = 0.1)]
        tol: f64,
    },
}

pub fn run_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let mut warnings: Vec<String> = vec![];
    match run(&cli, &mut warnings) {
        Ok(code) => {
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            if code == 0 && cli.strict && !warnings.is_empty() {
                2
            } else {
                code
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn run(cli: &Cli, warnings: &mut Vec<String>) -> Result<i32> {
    let (cfg, hash) = match &cli.config {
        Some(path) => config::load(path)?,
        None => {
            let cfg = Config::default();
            let hash = config::config_hash(&cfg)?;
            (cfg, hash)
        }
    };
    let spec = cfg.diffusion.build()?;
    if let Cmd::Classify = cli.cmd {
        return classify(&spec);
    }
    let grid = cfg.grid.build(&spec)?;
    if let Some(w) = grid.tail_warning(1e-6) {
        warnings.push(w);
    }
    match &cli.cmd {
        Cmd::Classify => unreachable!(),
        Cmd::Lambda0 => {
            let bottom = eigen::lambda0(&grid)?;
            let dense = eigen::lambda0_dense(&grid, false)?;
            println!("lambda0 = {:.12e}", bottom.lambda0);
            let mut rep = CsvReport::new(&[
                "lambda0",
                "bracket_lo",
                "bracket_hi",
                "iterations",
                "dense_oracle",
            ]);
            rep.meta("config_hash", &hash);
            rep.meta("radius", grid.radius());
            rep.meta("n_cells", grid.n_cells());
            rep.row(vec![
                bottom.lambda0,
                bottom.bracket.0,
                bottom.bracket.1,
                bottom.iterations as f64,
                dense,
            ]);
            rep.emit(report::resolve_out(cli.out.clone(), "lambda0").as_deref())?;
            Ok(0)
        }
        Cmd::Eigen { lambda } => {
            let psi = eigen::psi_march(&grid, *lambda);
            let mut rep = CsvReport::new(&["x", "psi"]);
            rep.meta("config_hash", &hash);
            rep.meta("lambda", format!("{lambda:.16e}"));
            if *lambda < 0.0 {
                let (raw, corrected) = eigen::normalization_residual(&grid, -lambda, &psi);
                rep.meta("normalization_residual", format!("{raw:.6e}"));
                rep.meta("normalization_residual_tail_corrected", format!("{corrected:.6e}"));
            }
            for (x, v) in grid.nodes().iter().zip(&psi) {
                rep.row(vec![*x, *v]);
            }
            rep.emit(report::resolve_out(cli.out.clone(), "eigen").as_deref())?;
            Ok(0)
        }
        Cmd::Qsd { lambda } => {
            let lambda = match lambda {
                Some(l) => *l,
                None => eigen::lambda0(&grid)?.lambda0,
            };
            let nu = GridMeasure::qsd(&grid, lambda)?;
            let mut rep = CsvReport::new(&["x", "density_m", "density_lebesgue", "cdf"]);
            rep.meta("config_hash", &hash);
            rep.meta("lambda", format!("{lambda:.16e}"));
            let g = nu.node_density();
            let cdf = nu.cdf_nodes();
            for (j, &x) in grid.nodes().iter().enumerate() {
                rep.row(vec![x, g[j], g[j] * grid.spec().m_density(x), cdf[j]]);
            }
            rep.emit(report::resolve_out(cli.out.clone(), "qsd").as_deref())?;
            Ok(0)
        }
        Cmd::Iterate { init, steps, track_every } => {
            let mu = config::parse_measure(&grid, init)?;
            let out = renewal::iterate(
                &grid,
                &mu,
                &IterateOptions {
                    steps: *steps,
                    lambda_hint: None,
                    track_every: *track_every,
                },
            )?;
            println!("lambda_hat = {:.12e}", out.lambda_hat);
            let mut rep = CsvReport::new(&[
                "step",
                "lambda_estimate",
                "kolmogorov_to_target",
                "sup_err",
            ]);
            rep.meta("config_hash", &hash);
            rep.meta("init", init);
            rep.meta("lambda_hat", format!("{:.16e}", out.lambda_hat));
            for s in &out.steps {
                rep.row(vec![
                    s.step as f64,
                    s.lambda_estimate,
                    s.kolmogorov_to_target,
                    s.sup_err,
                ]);
            }
            rep.emit(report::resolve_out(cli.out.clone(), "iterate").as_deref())?;
            Ok(0)
        }
        Cmd::Simulate { init } => {
            let mu = config::parse_measure(&grid, init)?;
            let sim = cfg.mc.build(&cfg.diffusion)?;
            let sample = mc::sample_hitting_times(
                grid.spec(),
                InitialLaw::Measure(&grid, &mu),
                &sim,
            )?;
            let mut rep = CsvReport::new(&["index", "hitting_time"]);
            rep.meta("config_hash", &hash);
            rep.meta("init", init);
            rep.meta("scheme", &cfg.mc.scheme);
            rep.meta("seed", sim.seed);
            rep.meta("n_paths", sim.n_paths);
            rep.meta("h", format!("{:.16e}", sim.h));
            rep.meta("horizon", format!("{:.16e}", sim.horizon));
            rep.meta("censored", sample.censored);
            for (i, t) in sample.times.iter().enumerate() {
                rep.row(vec![i as f64, *t]);
            }
            rep.emit(report::resolve_out(cli.out.clone(), "simulate").as_deref())?;
            Ok(0)
        }
        Cmd::Check { init, tol } => check(&cfg, &grid, init, *tol),
    }
}

fn classify(spec: &crate::model::DiffusionSpec) -> Result<i32> {
    let params = ClassifyParams::default();
    let lower = spec.classify_boundary(crate::model::BoundaryEnd::Lower, &params)?;
    println!(
        "lower boundary (0): {} (I = {:e}, J = {:e})",
        lower.kind, lower.i_value, lower.j_value
    );
    let upper = spec.classify_boundary(crate::model::BoundaryEnd::Upper, &params)?;
    println!(
        "upper boundary ({}): {} (I = {:e}, J = {:e})",
        spec.ell(),
        upper.kind,
        upper.i_value,
        upper.j_value
    );
    match spec.qsd_count(&params)? {
        QsdVerdict::UniqueQsd { .. } => println!("qsd count: exactly one"),
        QsdVerdict::InfinitelyMany { limsup, m_tail } => println!(
            "qsd count: a continuum nu_lambda, lambda in (0, lambda0] \
             (m tail = {m_tail:e}, limsup s*m = {limsup:e})"
        ),
        QsdVerdict::No { reason } => println!("qsd count: criterion fails ({reason})"),
        QsdVerdict::Inconclusive { detail } => println!("qsd count: inconclusive ({detail})"),
    }
    Ok(0)
}

struct CheckRun {
    failures: usize,
}

impl CheckRun {
    fn report(&mut self, name: &str, pass: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("{tag} {name}: {detail}");
        if !pass {
            self.failures += 1;
        }
    }
}

/// Mutual-consistency sweep: every absorption-rate estimator the crate
/// offers (spectral, moment-ratio, iteration, Monte Carlo tail) must agree,
/// and the discrete renewal identities must hold on this grid.
fn check(cfg: &Config, grid: &Grid, init: &str, tol: f64) -> Result<i32> {
    let mut run = CheckRun { failures: 0 };
    let spec = grid.spec();

    let params = ClassifyParams::default();
    match spec.validate(&params) {
        Ok(lower) => run.report(
            "lower-boundary",
            true,
            format!("0 is {} (absorption is reachable)", lower.kind),
        ),
        Err(e) => run.report("lower-boundary", false, e.to_string()),
    }

    let bottom = eigen::lambda0(grid)?;
    let dense = eigen::lambda0_dense(grid, false)?;
    let rel = (bottom.lambda0 - dense).abs() / bottom.lambda0;
    run.report(
        "lambda0-discretizations",
        rel < 5e-3,
        format!(
            "marching {:.6e} vs dense {:.6e} (rel diff {rel:.2e})",
            bottom.lambda0, dense
        ),
    );

    // eq. (78) normalization of the QSD family at a mid-spectrum rate.
    let lam = 0.5 * bottom.lambda0;
    let psi = eigen::psi_march(grid, -lam);
    let (_, corrected) = eigen::normalization_residual(grid, lam, &psi);
    run.report(
        "qsd-normalization",
        corrected.abs() < tol,
        format!("lambda int psi_(-lambda) dm - 1 = {corrected:.2e} at lambda = {lam:.4e}"),
    );

    let nu = GridMeasure::qsd(grid, lam)?;
    let phi_nu = renewal::renewal_transform(grid, &nu)?;
    let d = renewal::kolmogorov_distance(&phi_nu, &nu);
    run.report(
        "qsd-fixed-point",
        d < tol,
        format!("d(Phi nu_lambda, nu_lambda) = {d:.2e}"),
    );

    let mu = config::parse_measure(grid, init)?;
    let ledger = MomentLedger::compute(grid, &mu, 6)?;
    let phi_ledger = MomentLedger::compute(grid, &renewal::renewal_transform(grid, &mu)?, 5)?;
    let mut worst = 0.0f64;
    for n in 1..=4 {
        let lhs = phi_ledger.moments[n] * ledger.moments[1];
        let rhs = ledger.moments[n + 1];
        worst = worst.max((lhs / rhs - 1.0).abs());
    }
    run.report(
        "moment-recurrence",
        worst < 1e-8,
        format!("max relative defect {worst:.2e} over orders 1..4"),
    );

    // Rate estimators. The moment-ratio sequence dips toward the true rate
    // before truncation bias bends it back up, so take the dip.
    let deep = MomentLedger::compute(grid, &mu, 20)?;
    let ratio_rate = deep
        .ratios
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let iter_out = renewal::iterate(grid, &mu, &IterateOptions::default())?;
    run.report(
        "ratio-vs-iterate",
        (ratio_rate - iter_out.lambda_hat).abs() < tol,
        format!(
            "moment-ratio dip {ratio_rate:.4e} vs iterate lambda_hat {:.4e}",
            iter_out.lambda_hat
        ),
    );

    let mut sim = cfg.mc.build(&cfg.diffusion)?;
    // Tail slopes need statistics; exact sampling is cheap, so take more
    // paths than the config asks for.
    if matches!(sim.scheme, crate::mc::Scheme::ExactBmDrift { .. }) {
        sim.n_paths = sim.n_paths.max(100_000);
    }
    let sample = mc::sample_hitting_times(spec, InitialLaw::Measure(grid, &mu), &sim)?;
    let n = sample.times.len();
    if n < 1000 {
        run.report(
            "mc-tail-estimators",
            false,
            format!("only {n} absorbed paths; raise n_paths or horizon"),
        );
    } else {
        // Widen the agreement tolerance by the sampling-noise scale of the
        // tail estimators.
        let tol = tol + 15.0 / (n as f64).sqrt();
        // Late probe times: the 1/t extrapolation needs the algebraic
        // prefactor to be in its asymptotic regime.
        let q = |p: f64| sample.times[((p * n as f64) as usize).min(n - 1)];
        let (t90, t94, t98) = (q(0.90), q(0.94), q(0.98));
        let s = (t94 - t90).max(1e-3);
        let trend = mc::tail_ratio_trend(&sample, &[t90, t94, t98], s)?;
        let slope = -mc::log_tail_slope(&sample, 0.5, 0.9999)?;
        let pairs = [
            ("mc-trend-vs-slope", trend, slope),
            ("mc-trend-vs-ratio", trend, ratio_rate),
            ("mc-slope-vs-lambda0", slope, bottom.lambda0),
        ];
        for (name, a, b) in pairs {
            run.report(
                name,
                (a - b).abs() < tol,
                format!("{a:.4e} vs {b:.4e} (tol {tol:.1e})"),
            );
        }
    }

    if run.failures == 0 {
        println!("all checks passed");
        Ok(0)
    } else {
        println!("{} check(s) failed", run.failures);
        Ok(3)
    }
}
