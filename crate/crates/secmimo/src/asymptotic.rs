//! Deterministic-equivalent rates for the matched-filter downlink in the
//! large-antenna regime, plus the convergence diagnostics that justify
//! them.
//!
//! The θ quantities are evaluated exactly as defined (unnormalized traces,
//! unit noise term); the formulas' accuracy at finite N_t is checked
//! empirically by the diagnostics and the acceptance suite.

use crate::channel::{CorrelationSet, SystemConfig};
use crate::downlink::PowerSplit;
use crate::error::{Error, Result};
use crate::linalg::{herm_trace_product, hermitian_sqrt, trace_product};
use crate::rng::{substream, StreamPurpose};
use crate::training::mmse_filter;
use faer::{c64, Col, Mat};

/// Deterministic-equivalent ingredients of the secrecy rate: signal gain
/// θ_m, interference loads θ_{b,p}/θ_{b,q}, leakage loads θ_{e,e}/θ_{e,q},
/// the per-cell Λ sums behind them, and the estimation filters they came
/// from.
#[derive(Debug, Clone)]
pub struct ThetaSet {
    pub theta_m: f64,
    pub theta_bp: f64,
    pub theta_bq: f64,
    pub theta_ee: f64,
    pub theta_eq: f64,
    pub lambda_0m: Vec<f64>,
    pub lambda_e: Vec<f64>,
    pub filters_m: Vec<Mat<c64>>,
}

/// Evaluates the deterministic equivalents for the attacked user.
/// `attacked = false` sets the eavesdropper training power to zero
/// throughout, filters included.
pub fn compute_theta_set(
    corr: &CorrelationSet,
    config: &SystemConfig,
    attacked: bool,
) -> Result<ThetaSet> {
    let cells = config.cells();
    let k_users = config.users_per_cell;
    let m = config.m_index();
    let tau = config.pilot_length as f64;
    let n0 = config.uplink_noise;
    let p_e = if attacked {
        config.eavesdropper_power
    } else {
        0.0
    };

    let mut filters_m = Vec::with_capacity(cells);
    let mut lambda_0m = vec![0.0f64; cells];
    let mut lambda_e = vec![0.0f64; cells];
    let mut tr_hat_m = vec![0.0f64; cells];
    // Running sums of tr(R^l_0m R̂^l_lk)/tr(R̂^l_lk) and the eavesdropper
    // analogue, over l and k ≠ m.
    let mut cross_user = 0.0f64;
    let mut cross_eve = 0.0f64;
    let mut trace_r0m = 0.0f64;
    let mut trace_re = 0.0f64;

    for l in 0..cells {
        let r_0m = corr.r_user[0][m][l].as_mat();
        let r_e = corr.r_eve[l].as_mat();
        trace_r0m += corr.r_user[0][m][l].trace();
        trace_re += corr.r_eve[l].trace();
        for k in 0..k_users {
            let filter = mmse_filter(l, k, corr, config, attacked)?;
            let r_own = corr.r_user[l][k][l].as_mat();
            let x = &filter * r_own;
            let p_lk = config.power(l, k);
            let mut tr_x = c64::new(0.0, 0.0);
            for i in 0..x.nrows() {
                tr_x += x[(i, i)];
            }
            let tr_hat = p_lk.sqrt() * tau * tr_x.re;
            if tr_hat <= 0.0 {
                return Err(Error::DegenerateScenario(format!(
                    "estimated-channel covariance for cell {l} user {} has trace {tr_hat:.3e}",
                    k + 1
                )));
            }
            if k == m {
                tr_hat_m[l] = tr_hat;
                lambda_0m[l] = lambda_term(&filter, r_0m, l, corr, config, tau, n0, p_e, false);
                lambda_e[l] = lambda_term(&filter, r_e, l, corr, config, tau, n0, p_e, true);
                filters_m.push(filter);
            } else {
                let scale = p_lk.sqrt() * tau;
                cross_user += scale * trace_product(r_0m, x.as_ref()).re / tr_hat;
                cross_eve += scale * trace_product(r_e, x.as_ref()).re / tr_hat;
            }
        }
    }

    // θ_m from the reference cell: tr(R̂) + tr((R−R̂)R̂)/tr(R̂).
    let theta_m = {
        let r = corr.r_user[0][m][0].as_mat();
        let scale = config.power(0, m).sqrt() * tau;
        let prod = &filters_m[0] * r;
        let n = r.nrows();
        let r_hat = Mat::from_fn(n, n, |i, j| {
            (prod[(i, j)] + prod[(j, i)].conj()) * (0.5 * scale)
        });
        let t_rr = herm_trace_product(r, r_hat.as_ref());
        let t_hh = herm_trace_product(r_hat.as_ref(), r_hat.as_ref());
        tr_hat_m[0] + (t_rr - t_hh) / tr_hat_m[0]
    };

    let mut theta_bp = cross_user;
    for l in 1..cells {
        theta_bp += lambda_0m[l] / tr_hat_m[l];
    }
    let mut theta_bq = trace_r0m - cross_user;
    for l in 0..cells {
        theta_bq -= lambda_0m[l] / tr_hat_m[l];
    }
    let theta_ee = lambda_e[0] / tr_hat_m[0];
    let mut theta_eq = trace_re - cross_eve;
    for l in 0..cells {
        theta_eq -= lambda_e[l] / tr_hat_m[l];
    }

    Ok(ThetaSet {
        theta_m,
        theta_bp,
        theta_bq,
        theta_ee,
        theta_eq,
        lambda_0m,
        lambda_e,
        filters_m,
    })
}

/// Λ^l for a probe covariance R_probe (the attacked user's own R^l_0m, or
/// the eavesdropper's R^l_E when `eve_coherent`): coherent pilot term,
/// filtered noise, and the incoherent pilot-sharing terms.
#[allow(clippy::too_many_arguments)]
fn lambda_term(
    filter: &Mat<c64>,
    r_probe: faer::MatRef<'_, c64>,
    l: usize,
    corr: &CorrelationSet,
    config: &SystemConfig,
    tau: f64,
    n0: f64,
    p_e: f64,
    eve_coherent: bool,
) -> f64 {
    let g = filter.adjoint() * r_probe * filter;
    let mut tr_g = 0.0f64;
    for i in 0..g.nrows() {
        tr_g += g[(i, i)].re;
    }
    let coherent_power = if eve_coherent {
        p_e
    } else {
        config.power(0, config.m_index())
    };
    let coherent = tau * tau * coherent_power * trace_product(filter.as_ref(), r_probe).norm_sqr();
    let mut incoherent = 0.0f64;
    let m = config.m_index();
    // The coherent channel is excluded from the incoherent sum for the
    // user (its own t = 0 term), while for the eavesdropper every user
    // pilot t contributes and the attack term is the coherent one.
    let t_start = if eve_coherent { 0 } else { 1 };
    for t in t_start..config.cells() {
        let r_t = corr.r_user[t][m][l].as_mat();
        incoherent += config.power(t, m) * trace_product(g.as_ref(), r_t).re;
    }
    if !eve_coherent && p_e > 0.0 {
        incoherent += p_e * trace_product(g.as_ref(), corr.r_eve[l].as_mat()).re;
    }
    coherent + tau * n0 * tr_g + tau * tau * incoherent
}

/// pγθ_m / (pγθ_{b,p} + qγθ_{b,q} + 1).
pub fn sinr_user_asymptotic(thetas: &ThetaSet, split: &PowerSplit, gamma: f64) -> f64 {
    let num = split.p * gamma * thetas.theta_m;
    let den = split.p * gamma * thetas.theta_bp + split.q * gamma * thetas.theta_bq + 1.0;
    num / den
}

/// pγθ_{e,e} / (qγθ_{e,q} + 1).
pub fn sinr_eve_asymptotic(thetas: &ThetaSet, split: &PowerSplit, gamma: f64) -> f64 {
    let num = split.p * gamma * thetas.theta_ee;
    let den = split.q * gamma * thetas.theta_eq + 1.0;
    num / den
}

/// [log₂(1+SINR_user) − log₂(1+SINR_eve)]⁺.
pub fn secrecy_rate_asymptotic(thetas: &ThetaSet, split: &PowerSplit, gamma: f64) -> f64 {
    let user = (1.0 + sinr_user_asymptotic(thetas, split, gamma)).log2();
    let eve = (1.0 + sinr_eve_asymptotic(thetas, split, gamma)).log2();
    (user - eve).max(0.0)
}

/// Secrecy rate when every pilot-sharing covariance is orthogonal to the
/// eavesdropper's: equals the no-eavesdropper rate, and the precondition
/// Σ_t P_tm tr(R^l_tm R^l_E) = 0 is checked per cell, not assumed.
pub fn orthogonal_case_rate(
    corr: &CorrelationSet,
    config: &SystemConfig,
    split: &PowerSplit,
    gamma: f64,
) -> Result<f64> {
    let n = corr.n_t() as f64;
    let tol = 1e-8 * n * n;
    let mut worst = 0.0f64;
    for l in 0..config.cells() {
        let mut total = 0.0f64;
        for t in 0..config.cells() {
            total += config.power(t, config.m_index())
                * herm_trace_product(
                    corr.r_user[t][config.m_index()][l].as_mat(),
                    corr.r_eve[l].as_mat(),
                );
        }
        worst = worst.max(total.abs());
    }
    if worst > tol {
        return Err(Error::OrthogonalityViolated {
            max_product: worst,
            tol,
        });
    }
    let thetas = compute_theta_set(corr, config, false)?;
    Ok((1.0 + sinr_user_asymptotic(&thetas, split, gamma)).log2())
}

/// One convergence-diagnostic entry: a Monte Carlo mean of one appendix
/// quadratic form next to its deterministic limit.
#[derive(Debug, Clone)]
pub struct DiagnosticRow {
    pub n_t: usize,
    pub quantity: &'static str,
    pub empirical: f64,
    pub closed_form: f64,
    pub rel_gap: f64,
}

#[derive(Debug, Clone)]
pub struct DiagnosticsTable {
    pub rows: Vec<DiagnosticRow>,
}

impl DiagnosticsTable {
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "n_t,quantity,empirical,closed_form,rel_gap")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{:.10e},{:.10e},{:.10e}",
                r.n_t, r.quantity, r.empirical, r.closed_form, r.rel_gap
            )?;
        }
        Ok(())
    }
}

pub const DIAGNOSTIC_QUANTITIES: [&str; 6] = [
    "mf_signal",
    "mf_cross",
    "raw_signal",
    "eve_raw",
    "an_leak_user",
    "an_leak_eve",
];

/// Monte Carlo check of the appendix quadratic forms against their limits
/// over an antenna ladder. The scenario geometry is re-drawn per rung from
/// the same seed (the angle draws do not depend on N_t, so the physical
/// scenario is identical; only array size changes).
///
/// Per rung the closed forms are the reference-cell slices of the θ
/// machinery, computed locally so that degenerate (all-zero) scenarios
/// report zeros instead of failing.
pub fn convergence_diagnostics(
    config: &SystemConfig,
    n_t_list: &[usize],
    trials: usize,
) -> Result<DiagnosticsTable> {
    if trials == 0 {
        return Err(Error::Validation(
            "diagnostics need at least one trial".into(),
        ));
    }
    if n_t_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Validation(
            "antenna ladder must be strictly ascending".into(),
        ));
    }
    let mut rows = Vec::new();
    for (rung, &n_t) in n_t_list.iter().enumerate() {
        let mut cfg = config.clone();
        cfg.bs_antennas = n_t;
        let corr = crate::channel::build_scenario(&cfg)?;
        rows.extend(diagnose_rung(&corr, &cfg, trials, rung as u64)?);
    }
    Ok(DiagnosticsTable { rows })
}

fn diagnose_rung(
    corr: &CorrelationSet,
    config: &SystemConfig,
    trials: usize,
    rung: u64,
) -> Result<Vec<DiagnosticRow>> {
    let cells = config.cells();
    let k_users = config.users_per_cell;
    let m = config.m_index();
    let n_t = corr.n_t();
    let tau = config.pilot_length as f64;
    let n0 = config.uplink_noise;
    let p_e = config.eavesdropper_power;

    // Reference-cell training pipeline only.
    let mut filters = Vec::with_capacity(k_users);
    let mut tr_hat = Vec::with_capacity(k_users);
    let mut cross_user_terms = Vec::new();
    let mut cross_eve = 0.0f64;
    let r_0m = corr.r_user[0][m][0].as_mat();
    let r_e = corr.r_eve[0].as_mat();
    for k in 0..k_users {
        let filter = mmse_filter(0, k, corr, config, true)?;
        let x = &filter * corr.r_user[0][k][0].as_mat();
        let scale = config.power(0, k).sqrt() * tau;
        let mut t = 0.0f64;
        for i in 0..n_t {
            t += x[(i, i)].re;
        }
        tr_hat.push(scale * t);
        if k != m {
            let tu = scale * trace_product(r_0m, x.as_ref()).re;
            let te = scale * trace_product(r_e, x.as_ref()).re;
            cross_user_terms.push(safe_ratio(tu, tr_hat[k]));
            cross_eve += safe_ratio(te, tr_hat[k]);
        }
        filters.push(filter);
    }
    let lambda_0m = lambda_term(&filters[m], r_0m, 0, corr, config, tau, n0, p_e, false);
    let lambda_e = lambda_term(&filters[m], r_e, 0, corr, config, tau, n0, p_e, true);

    let theta_m_cf = {
        let scale = config.power(0, m).sqrt() * tau;
        let prod = &filters[m] * r_0m;
        let r_hat = Mat::from_fn(n_t, n_t, |i, j| {
            (prod[(i, j)] + prod[(j, i)].conj()) * (0.5 * scale)
        });
        let t_rr = herm_trace_product(r_0m, r_hat.as_ref());
        let t_hh = herm_trace_product(r_hat.as_ref(), r_hat.as_ref());
        tr_hat[m] + safe_ratio(t_rr - t_hh, tr_hat[m])
    };
    let cross_user_mean = if cross_user_terms.is_empty() {
        0.0
    } else {
        cross_user_terms.iter().sum::<f64>() / cross_user_terms.len() as f64
    };
    let cross_user_sum: f64 = cross_user_terms.iter().sum();
    let an_user_cf =
        corr.r_user[0][m][0].trace() - cross_user_sum - safe_ratio(lambda_0m, tr_hat[m]);
    let an_eve_cf = corr.r_eve[0].trace() - cross_eve - safe_ratio(lambda_e, tr_hat[m]);

    // Square roots of every covariance observed at the reference BS.
    let mut sqrt_user = Vec::with_capacity(cells);
    for t in 0..cells {
        let mut per_user = Vec::with_capacity(k_users);
        for k in 0..k_users {
            per_user.push(hermitian_sqrt(&corr.r_user[t][k][0])?);
        }
        sqrt_user.push(per_user);
    }
    let sqrt_eve = hermitian_sqrt(&corr.r_eve[0])?;

    let mut sums = [0.0f64; 6];
    for trial in 0..trials {
        let mut rng = substream(
            config.seed,
            StreamPurpose::Probe,
            (rung << 32) | trial as u64,
        );
        // Channels of every terminal at the reference BS, (cell, user)
        // order, then the eavesdropper, then one despread noise per pilot.
        let mut h = vec![vec![Col::<c64>::zeros(n_t); k_users]; cells];
        for t in 0..cells {
            for k in 0..k_users {
                h[t][k] = crate::channel::sample_correlated(&sqrt_user[t][k], &mut rng);
            }
        }
        let h_e = crate::channel::sample_correlated(&sqrt_eve, &mut rng);

        let mut h_hat = Vec::with_capacity(k_users);
        for k in 0..k_users {
            let mut y = Col::<c64>::zeros(n_t);
            for t in 0..cells {
                let s = tau * config.power(t, k).sqrt();
                for i in 0..n_t {
                    y[i] += h[t][k][i] * s;
                }
            }
            if k == m {
                let s = tau * p_e.sqrt();
                for i in 0..n_t {
                    y[i] += h_e[i] * s;
                }
            }
            let noise = crate::channel::sample_cn_vector(n_t, &mut rng);
            let ns = (tau * n0).sqrt();
            for i in 0..n_t {
                y[i] += noise[i] * ns;
            }
            h_hat.push(&filters[k] * &y);
        }

        let h_m = &h[0][m];
        let inv_n = 1.0 / n_t as f64;
        let raw = inner(h_hat[m].as_ref(), h_m.as_ref()).norm_sqr();
        let raw_e = inner(h_hat[m].as_ref(), h_e.as_ref()).norm_sqr();
        let norm_m = inner(h_hat[m].as_ref(), h_hat[m].as_ref()).re;
        sums[0] += if norm_m > 0.0 {
            raw / norm_m * inv_n
        } else {
            0.0
        };
        let mut cross = 0.0f64;
        for (k, hk) in h_hat.iter().enumerate() {
            if k == m {
                continue;
            }
            let nk = inner(hk.as_ref(), hk.as_ref()).re;
            if nk > 0.0 {
                cross += inner(hk.as_ref(), h_m.as_ref()).norm_sqr() / nk;
            }
        }
        sums[1] += if k_users > 1 {
            cross / (k_users - 1) as f64 * inv_n
        } else {
            0.0
        };
        sums[2] += raw * inv_n;
        sums[3] += raw_e * inv_n;
        sums[4] += an_residual(h_m, &h_hat, &tr_hat) * inv_n;
        sums[5] += an_residual(&h_e, &h_hat, &tr_hat) * inv_n;
    }

    let inv_trials = 1.0 / trials as f64;
    let inv_n = 1.0 / n_t as f64;
    let closed = [
        theta_m_cf * inv_n,
        cross_user_mean * inv_n,
        lambda_0m * inv_n,
        lambda_e * inv_n,
        an_user_cf * inv_n,
        an_eve_cf * inv_n,
    ];
    Ok(DIAGNOSTIC_QUANTITIES
        .iter()
        .zip(closed.iter())
        .enumerate()
        .map(|(i, (&quantity, &cf))| {
            let emp = sums[i] * inv_trials;
            let rel_gap = if cf.abs() > 0.0 {
                (emp - cf).abs() / cf.abs()
            } else {
                emp.abs()
            };
            DiagnosticRow {
                n_t,
                quantity,
                empirical: emp,
                closed_form: cf,
                rel_gap,
            }
        })
        .collect())
}

fn safe_ratio(num: f64, den: f64) -> f64 {
    if den != 0.0 {
        num / den
    } else {
        0.0
    }
}

fn inner(a: faer::ColRef<'_, c64>, b: faer::ColRef<'_, c64>) -> c64 {
    let mut acc = c64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        acc += a[i].conj() * b[i];
    }
    acc
}

/// ‖hᴴU‖² for U = I − Ĥ diag(1/tr(R̂_k)) Ĥᴴ, applied without forming U.
fn an_residual(h: &Col<c64>, h_hat: &[Col<c64>], tr_hat: &[f64]) -> f64 {
    let mut u = h.clone();
    for (k, hk) in h_hat.iter().enumerate() {
        if tr_hat[k] == 0.0 {
            continue;
        }
        let coef = inner(hk.as_ref(), h.as_ref()) * (1.0 / tr_hat[k]);
        for i in 0..u.nrows() {
            u[i] -= hk[i] * coef;
        }
    }
    inner(u.as_ref(), u.as_ref()).re
}
