//! Config-driven experiment orchestration: SNR sweeps over scheme
//! comparisons and attack-power grids, with deterministic CSV emission.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::asymptotic::{compute_theta_set, secrecy_rate_asymptotic, ThetaSet};
use crate::channel::{build_scenario, SystemConfig};
use crate::downlink::{power_split, simulate_trials, SecrecyEstimate, TrialEnsemble};
use crate::error::{Error, Result};
use crate::nullspace::{build_nullspace_context, nullspace_asymptotic_rate, DEFAULT_RANK_REL_TOL};
use crate::power::{optimal_power, AllocationDomain};

/// Transmission schemes the sweep can compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchemeSpec {
    /// Matched filter plus AN, signal share re-optimized per SNR point.
    #[serde(rename = "MF_AN_OPT")]
    MfAnOpt,
    /// Matched filter plus AN at every share in `p_values`.
    #[serde(rename = "MF_AN_FIXED")]
    MfAnFixed,
    /// Matched filter only, all power on signals.
    #[serde(rename = "NAIVE_MF")]
    NaiveMf,
    /// Null-space training and precoding for the target user.
    #[serde(rename = "NULLSPACE")]
    NullSpace,
}

impl SchemeSpec {
    pub fn label(&self) -> &'static str {
        match self {
            SchemeSpec::MfAnOpt => "MF_AN_OPT",
            SchemeSpec::MfAnFixed => "MF_AN_FIXED",
            SchemeSpec::NaiveMf => "NAIVE_MF",
            SchemeSpec::NullSpace => "NULLSPACE",
        }
    }
}

/// One experiment: a scenario, an SNR grid, the schemes to compare, and
/// optional signal-share and attack-power grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub config: SystemConfig,
    pub snr_grid_db: Vec<f64>,
    pub schemes: Vec<SchemeSpec>,
    pub trials: usize,
    /// Signal shares for `MF_AN_FIXED`; required iff that scheme is listed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_values: Option<Vec<f64>>,
    /// Attack powers to sweep; defaults to the scenario's single value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pe_values: Option<Vec<f64>>,
    pub output_path: String,
    /// Relative eigenvalue cutoff for `NULLSPACE`; defaults to 1e-8.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_rel_tol: Option<f64>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.snr_grid_db.is_empty() {
            return Err(Error::Validation("snr_grid_db must not be empty".into()));
        }
        if self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::Validation("snr_grid_db entries must be finite".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Validation("schemes must not be empty".into()));
        }
        if self.trials == 0 {
            return Err(Error::Validation("trials must be at least 1".into()));
        }
        if self.output_path.is_empty() {
            return Err(Error::Validation("output_path must not be empty".into()));
        }
        let n_t = self.config.bs_antennas;
        let k = self.config.users_per_cell;
        if self.schemes.contains(&SchemeSpec::MfAnFixed) {
            let ps = self.p_values.as_deref().unwrap_or_default();
            if ps.is_empty() {
                return Err(Error::Validation(
                    "MF_AN_FIXED needs a non-empty p_values list".into(),
                ));
            }
            for &p in ps {
                power_split(p, n_t, k)?;
            }
        }
        if let Some(pes) = &self.pe_values {
            if pes.is_empty() {
                return Err(Error::Validation("pe_values must not be empty".into()));
            }
            if pes.iter().any(|pe| !(pe.is_finite() && *pe >= 0.0)) {
                return Err(Error::Validation(
                    "pe_values must be finite and nonnegative".into(),
                ));
            }
        }
        if let Some(tol) = self.rank_rel_tol {
            if !(tol > 0.0 && tol < 1.0) {
                return Err(Error::Validation(format!(
                    "rank_rel_tol must lie in (0, 1), got {tol}"
                )));
            }
        }
        Ok(())
    }
}

/// One CSV line. `NaN` in the rate fields marks a scheme that was not
/// applicable at this point (emitted as `NA`); everywhere else the secrecy
/// fields are nonnegative by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scheme: &'static str,
    pub snr_db: f64,
    pub p: f64,
    pub q: f64,
    pub p_e: f64,
    pub rate_user_exact: f64,
    pub rate_eve_exact: f64,
    pub secrecy_exact: f64,
    pub secrecy_asymptotic: f64,
    pub trials: usize,
    pub seed: u64,
}

/// Parses and fully validates an experiment from JSON text. Unknown keys are
/// rejected; parse errors carry the JSON pointer of the offending element.
pub fn parse_experiment(text: &str) -> Result<ExperimentSpec> {
    let spec: ExperimentSpec = crate::channel::parse_json_strict(text)?;
    spec.validate()?;
    Ok(spec)
}

pub fn load_experiment(path: &Path) -> Result<ExperimentSpec> {
    parse_experiment(&std::fs::read_to_string(path)?)
}

pub fn snr_db_to_linear(snr_db: f64) -> f64 {
    10f64.powf(snr_db / 10.0)
}

struct AttackPoint {
    config: SystemConfig,
    thetas: ThetaSet,
    ensemble: TrialEnsemble,
    null_ready: bool,
}

/// Runs the full sweep on one scenario draw. Rows come out ordered by
/// scheme as listed (shares within `MF_AN_FIXED` outermost), then SNR, then
/// attack power; all trials at one attack power share channel realizations,
/// so scheme and SNR comparisons are paired.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let base = &spec.config;
    let corr = build_scenario(base)?;
    let n_t = base.bs_antennas;
    let k = base.users_per_cell;
    let seed = base.seed;
    let tol = spec.rank_rel_tol.unwrap_or(DEFAULT_RANK_REL_TOL);
    let pe_list = spec
        .pe_values
        .clone()
        .unwrap_or_else(|| vec![base.eavesdropper_power]);
    let wants_null = spec.schemes.contains(&SchemeSpec::NullSpace);

    let mut points = Vec::with_capacity(pe_list.len());
    for &pe in &pe_list {
        let mut cfg = base.clone();
        cfg.eavesdropper_power = pe;
        let thetas = compute_theta_set(&corr, &cfg, true)?;
        // A scenario the countermeasure cannot handle is reported per row
        // instead of aborting the sweep.
        let null_ctx = if wants_null {
            match build_nullspace_context(&corr, &cfg, tol) {
                Ok(ctx) => Some(ctx),
                Err(Error::NullSpaceNotApplicable { .. }) | Err(Error::Inconsistent(_)) => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        let ensemble = simulate_trials(&corr, &cfg, spec.trials, null_ctx.as_ref())?;
        points.push(AttackPoint {
            config: cfg,
            thetas,
            ensemble,
            null_ready: null_ctx.is_some(),
        });
    }

    let mut rows = Vec::new();
    let mut push = |scheme: &'static str,
                    snr_db: f64,
                    p: f64,
                    q: f64,
                    p_e: f64,
                    exact: &SecrecyEstimate,
                    asy: f64| {
        rows.push(ResultRow {
            scheme,
            snr_db,
            p,
            q,
            p_e,
            rate_user_exact: exact.rate_user,
            rate_eve_exact: exact.rate_eve,
            secrecy_exact: exact.secrecy,
            secrecy_asymptotic: asy,
            trials: spec.trials,
            seed,
        });
    };

    for scheme in &spec.schemes {
        match scheme {
            SchemeSpec::MfAnOpt => {
                for &snr in &spec.snr_grid_db {
                    let gamma = snr_db_to_linear(snr);
                    for pt in &points {
                        let alloc =
                            optimal_power(&pt.thetas, gamma, n_t, k, AllocationDomain::FeasibleQ)?;
                        let split = power_split(alloc.p_star, n_t, k)?;
                        let exact = pt.ensemble.secrecy_rates(&split, gamma, false)?;
                        push(
                            scheme.label(),
                            snr,
                            split.p,
                            split.q,
                            pt.config.eavesdropper_power,
                            &exact,
                            alloc.rate_at_star,
                        );
                    }
                }
            }
            SchemeSpec::MfAnFixed => {
                for &p in spec.p_values.as_deref().unwrap_or_default() {
                    let split = power_split(p, n_t, k)?;
                    for &snr in &spec.snr_grid_db {
                        let gamma = snr_db_to_linear(snr);
                        for pt in &points {
                            let exact = pt.ensemble.secrecy_rates(&split, gamma, false)?;
                            let asy = secrecy_rate_asymptotic(&pt.thetas, &split, gamma);
                            push(
                                scheme.label(),
                                snr,
                                split.p,
                                split.q,
                                pt.config.eavesdropper_power,
                                &exact,
                                asy,
                            );
                        }
                    }
                }
            }
            SchemeSpec::NaiveMf | SchemeSpec::NullSpace => {
                let split = power_split(1.0 / k as f64, n_t, k)?;
                for &snr in &spec.snr_grid_db {
                    let gamma = snr_db_to_linear(snr);
                    for pt in &points {
                        let (exact, asy) = match scheme {
                            SchemeSpec::NaiveMf => (
                                pt.ensemble.secrecy_rates(&split, gamma, false)?,
                                secrecy_rate_asymptotic(&pt.thetas, &split, gamma),
                            ),
                            SchemeSpec::NullSpace if pt.null_ready => (
                                pt.ensemble.secrecy_rates(&split, gamma, true)?,
                                // In the retained subspace the eavesdropper's
                                // asymptotic rate is zero by construction, so
                                // secrecy equals the user rate.
                                nullspace_asymptotic_rate(&corr, &pt.config, gamma, tol)?,
                            ),
                            _ => (
                                SecrecyEstimate {
                                    rate_user: f64::NAN,
                                    rate_eve: f64::NAN,
                                    secrecy: f64::NAN,
                                },
                                f64::NAN,
                            ),
                        };
                        push(
                            scheme.label(),
                            snr,
                            split.p,
                            split.q,
                            pt.config.eavesdropper_power,
                            &exact,
                            asy,
                        );
                    }
                }
            }
        }
    }
    Ok(rows)
}

pub const CSV_HEADER: &str = "scheme,snr_db,p,q,p_e,rate_user_exact,rate_eve_exact,secrecy_exact,secrecy_asymptotic,trials,seed";

fn fmt_real(x: f64) -> String {
    if x.is_nan() {
        "NA".to_string()
    } else {
        // Ten significant digits, always with a "." decimal point.
        format!("{x:.9e}")
    }
}

pub fn render_csv(rows: &[ResultRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.scheme,
            fmt_real(r.snr_db),
            fmt_real(r.p),
            fmt_real(r.q),
            fmt_real(r.p_e),
            fmt_real(r.rate_user_exact),
            fmt_real(r.rate_eve_exact),
            fmt_real(r.secrecy_exact),
            fmt_real(r.secrecy_asymptotic),
            r.trials,
            r.seed
        ));
    }
    out
}

pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Validation("refusing to emit an empty result set".into()));
    }
    std::fs::write(path, render_csv(rows))?;
    Ok(())
}
