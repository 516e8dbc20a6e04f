//! Command-line driver: scenario construction, closed-form and Monte Carlo
//! secrecy rates, power optimization, the null-space countermeasure, config
//! driven sweeps, and convergence diagnostics.
//!
//! Exit codes: 0 success, 2 validation or parse failure, 3 numerical
//! failure, 4 I/O failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use secmimo::asymptotic::{
    compute_theta_set, convergence_diagnostics, secrecy_rate_asymptotic, sinr_eve_asymptotic,
    sinr_user_asymptotic,
};
use secmimo::channel::{build_scenario, load_system_config, save_scenario, SystemConfig};
use secmimo::downlink::{power_split, simulate_trials, PowerSplit, TrialEnsemble};
use secmimo::experiment::{emit_csv, load_experiment, run_sweep, snr_db_to_linear};
use secmimo::nullspace::{build_nullspace_context, nullspace_asymptotic_rate, DEFAULT_RANK_REL_TOL};
use secmimo::power::{
    feasibility_threshold, optimal_power, quadratic_coefficients, AllocationDomain,
    FeasibilityKind,
};
use secmimo::{Error, ErrorKind, Result};

#[derive(Parser)]
#[command(
    name = "secmimo",
    version,
    about = "Secure massive MIMO downlink under an active pilot-contamination attack"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    /// Matched filter with artificial noise at the given signal share.
    MfAn,
    /// Matched filter only, p = 1/K.
    NaiveMf,
    /// Null-space training and precoding for the target user, p = 1/K.
    Nullspace,
}

#[derive(Subcommand)]
enum Command {
    /// Build the spatial correlation scenario and summarize or store it.
    Scenario {
        /// Scenario config (JSON, strict schema).
        #[arg(long)]
        config: PathBuf,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the full scenario (config + matrices) here instead of
        /// printing a summary.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form large-antenna secrecy rates over an SNR grid.
    RateAsymptotic {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// SNR grid in dB: a single value or a:b:step.
        #[arg(long = "snr-db", allow_hyphen_values = true)]
        snr_db: String,
        /// Signal power share p.
        #[arg(long)]
        p: f64,
        /// Override the eavesdropper's training power.
        #[arg(long)]
        pe: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo secrecy rates over an SNR grid.
    RateExact {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 500)]
        trials: usize,
        #[arg(long = "snr-db", allow_hyphen_values = true)]
        snr_db: String,
        /// Signal power share p; mf-an only (the other schemes fix p = 1/K).
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        pe: Option<f64>,
        #[arg(long, value_enum, default_value_t = SchemeArg::MfAn)]
        scheme: SchemeArg,
        /// Relative eigenvalue cutoff for the nullspace scheme.
        #[arg(long = "rank-tol", default_value_t = DEFAULT_RANK_REL_TOL)]
        rank_tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form optimal signal/AN power split per SNR point.
    OptimizePower {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "snr-db", allow_hyphen_values = true)]
        snr_db: String,
        #[arg(long)]
        pe: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Null-space countermeasure: subspace summary plus rates per SNR point.
    Nullspace {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 500)]
        trials: usize,
        #[arg(long = "snr-db", allow_hyphen_values = true)]
        snr_db: String,
        #[arg(long)]
        pe: Option<f64>,
        #[arg(long = "rank-tol", default_value_t = DEFAULT_RANK_REL_TOL)]
        rank_tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a full experiment spec and emit its CSV.
    Sweep {
        /// Experiment spec (JSON, strict schema).
        #[arg(long)]
        config: PathBuf,
        /// Override the scenario seed inside the spec.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the trial count inside the spec.
        #[arg(long)]
        trials: Option<usize>,
        /// Replace the spec's attack-power grid with this single value.
        #[arg(long)]
        pe: Option<f64>,
        /// Override the nullspace rank cutoff inside the spec.
        #[arg(long = "rank-tol")]
        rank_tol: Option<f64>,
        /// Override the spec's output path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Repeat the sweep this many times with fresh angle draws
        /// (seed, seed+1, ...), concatenating the rows.
        #[arg(long)]
        rescramble: Option<u32>,
    },
    /// Finite-antenna convergence ladder for the closed-form ingredients.
    Diagnostics {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated, strictly ascending antenna counts.
        #[arg(long = "nt-ladder", default_value = "64,256,1024")]
        nt_ladder: String,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_threads().and_then(|()| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Validation => 2,
                ErrorKind::Numerical => 3,
                ErrorKind::Io => 4,
            })
        }
    }
}

/// SECMIMO_THREADS caps the worker count for Monte Carlo trials; results do
/// not depend on it.
fn init_threads() -> Result<()> {
    match std::env::var("SECMIMO_THREADS") {
        Err(_) => Ok(()),
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .ok()
                .filter(|n| *n >= 1)
                .ok_or_else(|| {
                    Error::Validation(format!(
                        "SECMIMO_THREADS must be a positive integer, got {v:?}"
                    ))
                })?;
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Error::Validation(format!("thread pool setup failed: {e}")))
        }
    }
}

fn parse_snr_grid(text: &str) -> Result<Vec<f64>> {
    let bad = |t: &str| {
        Error::Validation(format!(
            "SNR grid must be a number or a:b:step with step > 0, got {t:?}"
        ))
    };
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [one] => {
            let v: f64 = one.trim().parse().map_err(|_| bad(text))?;
            if !v.is_finite() {
                return Err(bad(text));
            }
            Ok(vec![v])
        }
        [a, b, step] => {
            let a: f64 = a.trim().parse().map_err(|_| bad(text))?;
            let b: f64 = b.trim().parse().map_err(|_| bad(text))?;
            let step: f64 = step.trim().parse().map_err(|_| bad(text))?;
            if !(a.is_finite() && b.is_finite() && step > 0.0 && b >= a) {
                return Err(bad(text));
            }
            let mut grid = Vec::new();
            let mut i = 0u32;
            loop {
                let v = a + step * f64::from(i);
                if v > b + 1e-9 * step {
                    break;
                }
                grid.push(v);
                i += 1;
            }
            Ok(grid)
        }
        _ => Err(bad(text)),
    }
}

fn load_config(path: &Path, seed: Option<u64>, pe: Option<f64>) -> Result<SystemConfig> {
    let mut config = load_system_config(path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(pe) = pe {
        if !(pe.is_finite() && pe >= 0.0) {
            return Err(Error::Validation(format!(
                "eavesdropper power must be finite and nonnegative, got {pe}"
            )));
        }
        config.eavesdropper_power = pe;
        config.validate()?;
    }
    Ok(config)
}

fn write_out(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text)?;
            Ok(())
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn fmt_real(x: f64) -> String {
    if x.is_nan() {
        "NA".to_string()
    } else {
        format!("{x:.9e}")
    }
}

fn forced_split(config: &SystemConfig) -> Result<PowerSplit> {
    power_split(
        1.0 / config.users_per_cell as f64,
        config.bs_antennas,
        config.users_per_cell,
    )
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Scenario { config, seed, out } => {
            let config = load_config(&config, seed, None)?;
            let corr = build_scenario(&config)?;
            match out {
                Some(path) => {
                    save_scenario(&path, &config, &corr)?;
                    println!("scenario written to {}", path.display());
                }
                None => {
                    let cells = config.cells();
                    let mut text = String::from("matrix,trace\n");
                    for l in 0..cells {
                        for k in 0..config.users_per_cell {
                            for b in 0..cells {
                                text.push_str(&format!(
                                    "r_user[cell={l}][user={}][bs={b}],{}\n",
                                    k + 1,
                                    fmt_real(corr.r_user[l][k][b].trace())
                                ));
                            }
                        }
                    }
                    for b in 0..cells {
                        text.push_str(&format!(
                            "r_eve[bs={b}],{}\n",
                            fmt_real(corr.r_eve[b].trace())
                        ));
                    }
                    print!("{text}");
                }
            }
            Ok(())
        }

        Command::RateAsymptotic {
            config,
            seed,
            snr_db,
            p,
            pe,
            out,
        } => {
            let config = load_config(&config, seed, pe)?;
            let grid = parse_snr_grid(&snr_db)?;
            let corr = build_scenario(&config)?;
            let thetas = compute_theta_set(&corr, &config, true)?;
            let split = power_split(p, config.bs_antennas, config.users_per_cell)?;
            let mut text =
                String::from("snr_db,p,q,p_e,rate_user_asymptotic,rate_eve_asymptotic,secrecy_asymptotic\n");
            for &snr in &grid {
                let gamma = snr_db_to_linear(snr);
                let ru = (1.0 + sinr_user_asymptotic(&thetas, &split, gamma)).log2();
                let re = (1.0 + sinr_eve_asymptotic(&thetas, &split, gamma)).log2();
                let sec = secrecy_rate_asymptotic(&thetas, &split, gamma);
                text.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    fmt_real(snr),
                    fmt_real(split.p),
                    fmt_real(split.q),
                    fmt_real(config.eavesdropper_power),
                    fmt_real(ru),
                    fmt_real(re),
                    fmt_real(sec)
                ));
            }
            write_out(&text, out.as_deref())
        }

        Command::RateExact {
            config,
            seed,
            trials,
            snr_db,
            p,
            pe,
            scheme,
            rank_tol,
            out,
        } => {
            let config = load_config(&config, seed, pe)?;
            let grid = parse_snr_grid(&snr_db)?;
            let corr = build_scenario(&config)?;
            let (label, split, ensemble, use_null): (&str, PowerSplit, TrialEnsemble, bool) =
                match scheme {
                    SchemeArg::MfAn => {
                        let p = p.ok_or_else(|| {
                            Error::Validation("--p is required for the mf-an scheme".into())
                        })?;
                        let split = power_split(p, config.bs_antennas, config.users_per_cell)?;
                        let ens = simulate_trials(&corr, &config, trials, None)?;
                        ("MF_AN_FIXED", split, ens, false)
                    }
                    SchemeArg::NaiveMf => {
                        reject_p(p, "naive-mf")?;
                        let ens = simulate_trials(&corr, &config, trials, None)?;
                        ("NAIVE_MF", forced_split(&config)?, ens, false)
                    }
                    SchemeArg::Nullspace => {
                        reject_p(p, "nullspace")?;
                        let ctx = build_nullspace_context(&corr, &config, rank_tol)?;
                        let ens = simulate_trials(&corr, &config, trials, Some(&ctx))?;
                        ("NULLSPACE", forced_split(&config)?, ens, true)
                    }
                };
            let mut text = String::from(
                "scheme,snr_db,p,q,p_e,rate_user_exact,rate_eve_exact,secrecy_exact,trials,seed\n",
            );
            for &snr in &grid {
                let gamma = snr_db_to_linear(snr);
                let est = ensemble.secrecy_rates(&split, gamma, use_null)?;
                text.push_str(&format!(
                    "{label},{},{},{},{},{},{},{},{trials},{}\n",
                    fmt_real(snr),
                    fmt_real(split.p),
                    fmt_real(split.q),
                    fmt_real(config.eavesdropper_power),
                    fmt_real(est.rate_user),
                    fmt_real(est.rate_eve),
                    fmt_real(est.secrecy),
                    config.seed
                ));
            }
            write_out(&text, out.as_deref())
        }

        Command::OptimizePower {
            config,
            seed,
            snr_db,
            pe,
            out,
        } => {
            let config = load_config(&config, seed, pe)?;
            let grid = parse_snr_grid(&snr_db)?;
            let corr = build_scenario(&config)?;
            let thetas = compute_theta_set(&corr, &config, true)?;
            let n_t = config.bs_antennas;
            let k = config.users_per_cell;
            let mut text = String::from(
                "snr_db,p_e,domain,p_star,q_star,secrecy_asymptotic,feasibility,threshold\n",
            );
            for &snr in &grid {
                let gamma = snr_db_to_linear(snr);
                let coeffs = quadratic_coefficients(&thetas, gamma, n_t, k);
                let feas = feasibility_threshold(&coeffs);
                let feas_name = match feas.kind {
                    FeasibilityKind::PAbove => "P_ABOVE",
                    FeasibilityKind::PBelow => "P_BELOW",
                    FeasibilityKind::Always => "ALWAYS",
                    FeasibilityKind::Never => "NEVER",
                };
                for (domain, name) in [
                    (AllocationDomain::FeasibleQ, "FEASIBLE_Q"),
                    (AllocationDomain::CorollaryLiteral, "COROLLARY_LITERAL"),
                ] {
                    let alloc = optimal_power(&thetas, gamma, n_t, k, domain)?;
                    text.push_str(&format!(
                        "{},{},{name},{},{},{},{feas_name},{}\n",
                        fmt_real(snr),
                        fmt_real(config.eavesdropper_power),
                        fmt_real(alloc.p_star),
                        fmt_real(alloc.q_star),
                        fmt_real(alloc.rate_at_star),
                        fmt_real(feas.threshold.unwrap_or(f64::NAN))
                    ));
                }
            }
            write_out(&text, out.as_deref())
        }

        Command::Nullspace {
            config,
            seed,
            trials,
            snr_db,
            pe,
            rank_tol,
            out,
        } => {
            let config = load_config(&config, seed, pe)?;
            let grid = parse_snr_grid(&snr_db)?;
            let corr = build_scenario(&config)?;
            let ctx = build_nullspace_context(&corr, &config, rank_tol)?;
            let ensemble = simulate_trials(&corr, &config, trials, Some(&ctx))?;
            let split = forced_split(&config)?;
            let mut text = String::from(
                "snr_db,null_dim,p,q,p_e,rate_user_exact,rate_eve_exact,secrecy_exact,secrecy_asymptotic,trials,seed\n",
            );
            for &snr in &grid {
                let gamma = snr_db_to_linear(snr);
                let est = ensemble.secrecy_rates(&split, gamma, true)?;
                let asy = nullspace_asymptotic_rate(&corr, &config, gamma, rank_tol)?;
                text.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{trials},{}\n",
                    fmt_real(snr),
                    ctx.m_dim,
                    fmt_real(split.p),
                    fmt_real(split.q),
                    fmt_real(config.eavesdropper_power),
                    fmt_real(est.rate_user),
                    fmt_real(est.rate_eve),
                    fmt_real(est.secrecy),
                    fmt_real(asy),
                    config.seed
                ));
            }
            write_out(&text, out.as_deref())
        }

        Command::Sweep {
            config,
            seed,
            trials,
            pe,
            rank_tol,
            out,
            rescramble,
        } => {
            let mut spec = load_experiment(&config)?;
            if let Some(seed) = seed {
                spec.config.seed = seed;
            }
            if let Some(trials) = trials {
                spec.trials = trials;
            }
            if let Some(pe) = pe {
                spec.pe_values = Some(vec![pe]);
            }
            if let Some(tol) = rank_tol {
                spec.rank_rel_tol = Some(tol);
            }
            if let Some(path) = out {
                spec.output_path = path.to_string_lossy().into_owned();
            }
            let reps = rescramble.unwrap_or(1);
            if reps == 0 {
                return Err(Error::Validation(
                    "--rescramble needs at least one repetition".into(),
                ));
            }
            let base_seed = spec.config.seed;
            let mut rows = Vec::new();
            for rep in 0..u64::from(reps) {
                let mut rep_spec = spec.clone();
                rep_spec.config.seed = base_seed + rep;
                rows.extend(run_sweep(&rep_spec)?);
            }
            let path = PathBuf::from(&spec.output_path);
            emit_csv(&rows, &path)?;
            println!("wrote {} rows to {}", rows.len(), path.display());
            Ok(())
        }

        Command::Diagnostics {
            config,
            seed,
            nt_ladder,
            trials,
            out,
        } => {
            let config = load_config(&config, seed, None)?;
            let ladder: Vec<usize> = nt_ladder
                .split(',')
                .map(|s| {
                    s.trim().parse::<usize>().map_err(|_| {
                        Error::Validation(format!(
                            "antenna ladder entries must be integers, got {:?}",
                            s.trim()
                        ))
                    })
                })
                .collect::<Result<_>>()?;
            let table = convergence_diagnostics(&config, &ladder, trials)?;
            let mut bytes = Vec::new();
            table.write_csv(&mut bytes)?;
            let text = String::from_utf8(bytes)
                .map_err(|e| Error::Validation(format!("diagnostics produced invalid UTF-8: {e}")))?;
            write_out(&text, out.as_deref())
        }
    }
}

fn reject_p(p: Option<f64>, scheme: &str) -> Result<()> {
    if p.is_some() {
        return Err(Error::Validation(format!(
            "--p cannot be combined with the {scheme} scheme, which fixes p = 1/K"
        )));
    }
    Ok(())
}
