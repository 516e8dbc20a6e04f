//! Downlink transmission: matched-filter precoding with artificial noise in
//! the estimated channels' complement, exact instantaneous SINRs, and Monte
//! Carlo ergodic secrecy rates.

use faer::{c64, Col, Mat};
use rayon::prelude::*;

use crate::channel::{
    sample_cn_vector, ChannelDraw, CorrelationSet, ScenarioSampler, SystemConfig,
};
use crate::error::{Error, Result};
use crate::linalg::{inner, trace_product, HermitianMatrix};
use crate::nullspace::{build_nullspace_context, NullSpaceContext};
use crate::rng::{substream, StreamPurpose};
use crate::training::mmse_filter;

/// Signal/AN shares tied to the constraint K·p + (N_t − K)·q = 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSplit {
    pub p: f64,
    pub q: f64,
    pub n_t: usize,
    pub k: usize,
}

pub fn power_split(p: f64, n_t: usize, k: usize) -> Result<PowerSplit> {
    if k == 0 || n_t <= k {
        return Err(Error::Validation(format!(
            "power split needs 0 < K < N_t, got K = {k}, N_t = {n_t}"
        )));
    }
    let max_p = 1.0 / k as f64;
    if !p.is_finite() || !(0.0..=max_p).contains(&p) {
        return Err(Error::InfeasibleSplit { p, max_p });
    }
    // The all-signal boundary p = 1/K lands at q = -K·eps/(N_t-K) in floating
    // point; clamp that to the exact boundary.
    let q = ((1.0 - k as f64 * p) / (n_t - k) as f64).max(0.0);
    Ok(PowerSplit { p, q, n_t, k })
}

/// All cells' precoding state: unit-norm matched-filter columns `w[l][k]`
/// and the AN shaping matrix of every cell.
#[derive(Debug, Clone)]
pub struct PrecoderSet {
    pub w: Vec<Vec<Col<c64>>>,
    pub u_null: Vec<Mat<c64>>,
}

/// Normalizes every cell's channel estimates into matched-filter precoders.
pub fn matched_filter_precoders(estimates: &[Vec<Col<c64>>]) -> Result<Vec<Vec<Col<c64>>>> {
    estimates
        .iter()
        .map(|cell| {
            cell.iter()
                .map(|h| {
                    let norm_sq = inner(h.as_ref(), h.as_ref()).re;
                    if norm_sq <= 0.0 {
                        return Err(Error::DegenerateEstimate);
                    }
                    let scale = norm_sq.sqrt().recip();
                    Ok(Col::from_fn(h.nrows(), |i| h[i] * scale))
                })
                .collect()
        })
        .collect()
}

/// AN shaping matrix U = I − Ĥ diag(1/tr R̂_k) Ĥᴴ for one cell; exactly the
/// trace-normalized construction, no orthonormalization.
pub fn an_shaping_matrix(estimates: &[Col<c64>], r_hats: &[HermitianMatrix]) -> Result<Mat<c64>> {
    if estimates.is_empty() || estimates.len() != r_hats.len() {
        return Err(Error::Validation(format!(
            "AN shaping needs matching nonempty estimate/covariance lists, got {} and {}",
            estimates.len(),
            r_hats.len()
        )));
    }
    let n_t = estimates[0].nrows();
    let mut u = Mat::<c64>::zeros(n_t, n_t);
    for i in 0..n_t {
        u[(i, i)] = c64::new(1.0, 0.0);
    }
    for (h, r_hat) in estimates.iter().zip(r_hats) {
        if h.nrows() != n_t {
            return Err(Error::Validation(
                "estimate vectors have mismatched lengths".into(),
            ));
        }
        let tr = r_hat.trace();
        if tr <= 0.0 {
            return Err(Error::Validation(format!(
                "AN shaping needs positive estimate-covariance traces, got {tr:.3e}"
            )));
        }
        let w = 1.0 / tr;
        for j in 0..n_t {
            let hj = h[j].conj() * w;
            for i in 0..n_t {
                u[(i, j)] -= h[i] * hj;
            }
        }
    }
    Ok(u)
}

/// Exact instantaneous SINR of target user `m` for one channel realization,
/// with signal and AN powers already marginalized over symbols.
pub fn instantaneous_sinr_user(
    draw: &ChannelDraw,
    precoders: &PrecoderSet,
    split: &PowerSplit,
    gamma: f64,
    m: usize,
) -> f64 {
    let cells = precoders.w.len();
    let p = split.p;
    let q = split.q;
    let h0 = &draw.h_user[0][m][0];
    let signal = p * gamma * inner(precoders.w[0][m].as_ref(), h0.as_ref()).norm_sqr();
    let mut denom = 1.0;
    for l in 0..cells {
        let h = &draw.h_user[0][m][l];
        for (k, w) in precoders.w[l].iter().enumerate() {
            if l == 0 && k == m {
                continue;
            }
            denom += p * gamma * inner(w.as_ref(), h.as_ref()).norm_sqr();
        }
        let an = precoders.u_null[l].adjoint() * h;
        denom += q * gamma * inner(an.as_ref(), an.as_ref()).re;
    }
    signal / denom
}

/// Exact instantaneous SINR of the eavesdropper, worst case: every signal
/// except user m's is assumed decoded and cancelled, only AN remains.
pub fn instantaneous_sinr_eve(
    draw: &ChannelDraw,
    precoders: &PrecoderSet,
    split: &PowerSplit,
    gamma: f64,
    m: usize,
) -> f64 {
    let p = split.p;
    let q = split.q;
    let signal = p * gamma * inner(precoders.w[0][m].as_ref(), draw.h_eve[0].as_ref()).norm_sqr();
    let mut denom = 1.0;
    for (l, u) in precoders.u_null.iter().enumerate() {
        let an = u.adjoint() * &draw.h_eve[l];
        denom += q * gamma * inner(an.as_ref(), an.as_ref()).re;
    }
    signal / denom
}

/// Downlink transmission scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    /// Matched filter with artificial noise at the given power split.
    MfAn,
    /// Matched filter only, all power on signals: p = 1/K, q = 0.
    NaiveMf,
    /// Matched filter for everyone except user m, whose chain moves into the
    /// eavesdropper correlation's effective null space; p = 1/K, q = 0.
    NullSpace { rank_rel_tol: f64 },
}

/// Ergodic rates across Monte Carlo trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecrecyEstimate {
    pub rate_user: f64,
    pub rate_eve: f64,
    pub secrecy: f64,
}

/// Per-trial channel quadratics. Every SINR in this model is a ratio of
/// these five (seven with the null-space terms) scalars scaled by p, q and
/// γ, so one simulation pass prices every power split and SNR.
#[derive(Debug, Clone, Copy)]
pub struct TrialQuadratics {
    /// |h⁰₀ₘᴴ w₀ₘ|²
    pub signal: f64,
    /// Σ over all other precoded streams of |hᴴw|² at user m.
    pub interference: f64,
    /// Σ_l ‖h^l₀ₘᴴ U_l‖²
    pub an_user: f64,
    /// |h⁰_Eᴴ w₀ₘ|²
    pub eve_signal: f64,
    /// Σ_l ‖h^l_Eᴴ U_l‖²
    pub an_eve: f64,
    /// |h⁰₀ₘᴴ w₀ₘ,null|², when a null-space context is present.
    pub null_signal: Option<f64>,
    /// |h⁰_Eᴴ w₀ₘ,null|², when a null-space context is present.
    pub null_eve: Option<f64>,
}

/// Channel realizations reduced to their SINR quadratics.
#[derive(Debug, Clone)]
pub struct TrialEnsemble {
    pub trials: Vec<TrialQuadratics>,
}

/// Runs `trials` independent training-plus-transmission rounds and records
/// the SINR quadratics of each. Trial t draws from the trial substream of
/// the scenario seed, so ensembles for the same scenario share channels
/// across schemes and parameter points.
pub fn simulate_trials(
    corr: &CorrelationSet,
    config: &SystemConfig,
    trials: usize,
    null_ctx: Option<&NullSpaceContext>,
) -> Result<TrialEnsemble> {
    if trials == 0 {
        return Err(Error::Validation("trial count must be at least 1".into()));
    }
    config.validate()?;
    let cells = config.cells();
    let k_users = config.users_per_cell;
    let m = config.m_index();
    let tau = config.pilot_length as f64;
    let noise_scale = (tau * config.uplink_noise).sqrt();
    let n_t = corr.n_t();

    let sampler = ScenarioSampler::new(corr)?;
    let mut filters = Vec::with_capacity(cells);
    let mut tr_hat = Vec::with_capacity(cells);
    for l in 0..cells {
        let mut row_f = Vec::with_capacity(k_users);
        let mut row_t = Vec::with_capacity(k_users);
        for k in 0..k_users {
            let filter = mmse_filter(l, k, corr, config, true)?;
            let tr = config.power(l, k).sqrt()
                * tau
                * trace_product(filter.as_ref(), corr.r_user[l][k][l].as_mat()).re;
            if tr <= 0.0 {
                return Err(Error::DegenerateScenario(format!(
                    "estimate covariance trace for user {k} of cell {l} is {tr:.3e}"
                )));
            }
            row_f.push(filter);
            row_t.push(tr);
        }
        filters.push(row_f);
        tr_hat.push(row_t);
    }

    // Every trial seeds its own substream, so the trials are independent
    // jobs and the ordered collect makes the result identical for any
    // worker count, the sequential loop included.
    let rows = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<TrialQuadratics> {
            let mut rng = substream(config.seed, StreamPurpose::Trial, t as u64);
            let draw = sampler.sample_channel_draw(&mut rng);

            let mut h_hat: Vec<Vec<Col<c64>>> = Vec::with_capacity(cells);
            let mut norm_sq: Vec<Vec<f64>> = Vec::with_capacity(cells);
            let mut y_0m: Option<Col<c64>> = None;
            for l in 0..cells {
                let mut row_h = Vec::with_capacity(k_users);
                let mut row_n = Vec::with_capacity(k_users);
                for k in 0..k_users {
                    let mut y = Col::<c64>::zeros(n_t);
                    for src in 0..cells {
                        let scale = tau * config.power(src, k).sqrt();
                        let h = &draw.h_user[src][k][l];
                        for i in 0..n_t {
                            y[i] += h[i] * scale;
                        }
                    }
                    if k == m && config.eavesdropper_power > 0.0 {
                        let scale = tau * config.eavesdropper_power.sqrt();
                        let h = &draw.h_eve[l];
                        for i in 0..n_t {
                            y[i] += h[i] * scale;
                        }
                    }
                    let noise = sample_cn_vector(n_t, &mut rng);
                    for i in 0..n_t {
                        y[i] += noise[i] * noise_scale;
                    }
                    let est = &filters[l][k] * &y;
                    let ns = inner(est.as_ref(), est.as_ref()).re;
                    if ns <= 0.0 {
                        return Err(Error::DegenerateEstimate);
                    }
                    if l == 0 && k == m && null_ctx.is_some() {
                        y_0m = Some(y);
                    }
                    row_h.push(est);
                    row_n.push(ns);
                }
                h_hat.push(row_h);
                norm_sq.push(row_n);
            }

            let mut interference = 0.0;
            let mut an_user = 0.0;
            let mut an_eve = 0.0;
            for l in 0..cells {
                let hm = &draw.h_user[0][m][l];
                let he = &draw.h_eve[l];
                for k in 0..k_users {
                    if !(l == 0 && k == m) {
                        interference +=
                            inner(h_hat[l][k].as_ref(), hm.as_ref()).norm_sqr() / norm_sq[l][k];
                    }
                }
                an_user += an_residual_norm_sq(hm, &h_hat[l], &tr_hat[l]);
                an_eve += an_residual_norm_sq(he, &h_hat[l], &tr_hat[l]);
            }
            let hm0 = &draw.h_user[0][m][0];
            let he0 = &draw.h_eve[0];
            let signal = inner(h_hat[0][m].as_ref(), hm0.as_ref()).norm_sqr() / norm_sq[0][m];
            let eve_signal = inner(h_hat[0][m].as_ref(), he0.as_ref()).norm_sqr() / norm_sq[0][m];

            let (null_signal, null_eve) = match null_ctx {
                None => (None, None),
                Some(ctx) => {
                    // The projected observation reuses the same per-trial noise
                    // the full-dimension chain saw: Vᴴ of a CN(0, τN₀ I_{N_t})
                    // vector is CN(0, τN₀ I_M), and reusing it keeps the draw
                    // layout identical with and without the countermeasure.
                    let y = y_0m.as_ref().expect("stored during estimation");
                    let yn = ctx.v.adjoint() * y;
                    let est = &ctx.filter * &yn;
                    let ns = inner(est.as_ref(), est.as_ref()).re;
                    if ns <= 0.0 {
                        return Err(Error::DegenerateEstimate);
                    }
                    let lifted = &ctx.v * &est;
                    (
                        Some(inner(lifted.as_ref(), hm0.as_ref()).norm_sqr() / ns),
                        Some(inner(lifted.as_ref(), he0.as_ref()).norm_sqr() / ns),
                    )
                }
            };

            Ok(TrialQuadratics {
                signal,
                interference,
                an_user,
                an_eve,
                eve_signal,
                null_signal,
                null_eve,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrialEnsemble { trials: rows })
}

/// ‖h − Σ_k ĥ_k (ĥ_kᴴ h)/tr_k‖², which equals ‖hᴴU‖² for the cell's AN
/// shaping matrix without materializing U.
fn an_residual_norm_sq(h: &Col<c64>, h_hat: &[Col<c64>], tr_hat: &[f64]) -> f64 {
    let mut res = h.clone();
    for (est, tr) in h_hat.iter().zip(tr_hat) {
        let coef = inner(est.as_ref(), h.as_ref()) * (1.0 / tr);
        for i in 0..res.nrows() {
            res[i] -= est[i] * coef;
        }
    }
    inner(res.as_ref(), res.as_ref()).re
}

impl TrialEnsemble {
    /// Ergodic rates at one (split, γ) point; `use_null` selects the
    /// null-space precoder's quadratics for the target user.
    pub fn secrecy_rates(
        &self,
        split: &PowerSplit,
        gamma: f64,
        use_null: bool,
    ) -> Result<SecrecyEstimate> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::Validation(format!(
                "downlink SNR must be finite and nonnegative, got {gamma}"
            )));
        }
        let p = split.p;
        let q = split.q;
        let mut rate_user = 0.0;
        let mut rate_eve = 0.0;
        for row in &self.trials {
            let (sig, eve_sig) = if use_null {
                match (row.null_signal, row.null_eve) {
                    (Some(s), Some(e)) => (s, e),
                    _ => {
                        return Err(Error::Validation(
                            "ensemble was simulated without a null-space context".into(),
                        ))
                    }
                }
            } else {
                (row.signal, row.eve_signal)
            };
            let sinr_user =
                p * gamma * sig / (p * gamma * row.interference + q * gamma * row.an_user + 1.0);
            let sinr_eve = p * gamma * eve_sig / (q * gamma * row.an_eve + 1.0);
            rate_user += (1.0 + sinr_user).log2();
            rate_eve += (1.0 + sinr_eve).log2();
        }
        let n = self.trials.len() as f64;
        rate_user /= n;
        rate_eve /= n;
        Ok(SecrecyEstimate {
            rate_user,
            rate_eve,
            secrecy: (rate_user - rate_eve).max(0.0),
        })
    }
}

/// Monte Carlo ergodic secrecy rate of one scheme at the configured
/// downlink SNR. Each trial simulates training, estimation, precoding and
/// both exact SINRs on a fresh channel draw from the trial substream.
pub fn monte_carlo_secrecy_rate(
    corr: &CorrelationSet,
    config: &SystemConfig,
    split: &PowerSplit,
    scheme: Scheme,
    trials: usize,
) -> Result<SecrecyEstimate> {
    let gamma = config.downlink_snr;
    match scheme {
        Scheme::MfAn => {
            let ensemble = simulate_trials(corr, config, trials, None)?;
            ensemble.secrecy_rates(split, gamma, false)
        }
        Scheme::NaiveMf => {
            let forced = power_split(
                1.0 / config.users_per_cell as f64,
                corr.n_t(),
                config.users_per_cell,
            )?;
            let ensemble = simulate_trials(corr, config, trials, None)?;
            ensemble.secrecy_rates(&forced, gamma, false)
        }
        Scheme::NullSpace { rank_rel_tol } => {
            let ctx = build_nullspace_context(corr, config, rank_rel_tol)?;
            let forced = power_split(
                1.0 / config.users_per_cell as f64,
                corr.n_t(),
                config.users_per_cell,
            )?;
            let ensemble = simulate_trials(corr, config, trials, Some(&ctx))?;
            ensemble.secrecy_rates(&forced, gamma, true)
        }
    }
}
