//! Pilot transmission under the contamination attack and MMSE channel
//! estimation.
//!
//! The full τN_t received block is never materialized: despreading an
//! orthogonal pilot of norm² = τ leaves ỹ = τ Σ_t √P_tk h_tk (+ the
//! attack term on pilot m) + n' with n' exactly CN(0, τN₀ I), so the
//! despread observation is simulated directly.

use faer::{c64, Col, Mat};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use crate::channel::{sample_cn_vector, ChannelDraw, CorrelationSet, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eig, solve_hermitian, HermitianMatrix};

/// Orthogonal pilot family: K columns of the τ×τ DFT matrix with
/// unit-modulus entries, so every pilot has norm² = τ.
#[derive(Debug, Clone)]
pub struct PilotBook {
    pub tau: usize,
    pub pilots: Vec<Col<c64>>,
}

pub fn pilot_book(k: usize, tau: usize) -> Result<PilotBook> {
    if tau < k {
        return Err(Error::Validation(format!(
            "pilot length {tau} cannot host {k} orthogonal pilots"
        )));
    }
    if k == 0 {
        return Err(Error::Validation(
            "pilot book needs at least one user".into(),
        ));
    }
    let pilots = (0..k)
        .map(|col| {
            Col::from_fn(tau, |row| {
                c64::from_polar(1.0, -2.0 * PI * (row * col) as f64 / tau as f64)
            })
        })
        .collect();
    Ok(PilotBook { tau, pilots })
}

/// Despread pilot observation ỹ at one base station for one pilot index.
///
/// Indices are 0-based: `cell` is the observing base station (equal to the
/// served cell for the estimation chain), `user` the pilot index.
#[derive(Debug, Clone)]
pub struct DespreadObservation {
    pub y: Col<c64>,
    pub cell: usize,
    pub user: usize,
}

/// Simulates the despread observation for pilot `user` at base station
/// `cell`. Pilot m (the attacked user's pilot) picks up the eavesdropper
/// term when `attack_active`; other pilots never do.
pub fn simulate_despread(
    cell: usize,
    user: usize,
    draw: &ChannelDraw,
    config: &SystemConfig,
    attack_active: bool,
    rng: &mut ChaCha8Rng,
) -> DespreadObservation {
    let n_t = draw.h_user[0][0][0].nrows();
    let tau = config.pilot_length as f64;
    let mut y = Col::<c64>::zeros(n_t);
    for t in 0..config.cells() {
        let scale = tau * config.power(t, user).sqrt();
        let h = &draw.h_user[t][user][cell];
        for i in 0..n_t {
            y[i] += h[i] * scale;
        }
    }
    if attack_active && user == config.m_index() {
        let scale = tau * config.eavesdropper_power.sqrt();
        let h = &draw.h_eve[cell];
        for i in 0..n_t {
            y[i] += h[i] * scale;
        }
    }
    let noise_scale = (tau * config.uplink_noise).sqrt();
    let n = sample_cn_vector(n_t, rng);
    for i in 0..n_t {
        y[i] += n[i] * noise_scale;
    }
    DespreadObservation { y, cell, user }
}

/// Interference-plus-noise matrix of the despread observation, divided by
/// τ: Q = N₀ I + τ (Σ_t P_tk R^l_tk + [attack on pilot m] P_E R^l_E).
fn despread_gram(
    cell: usize,
    user: usize,
    corr: &CorrelationSet,
    config: &SystemConfig,
    attacked: bool,
) -> Mat<c64> {
    let n_t = corr.n_t();
    let tau = config.pilot_length as f64;
    let mut q = Mat::<c64>::zeros(n_t, n_t);
    for i in 0..n_t {
        q[(i, i)] = c64::new(config.uplink_noise, 0.0);
    }
    for t in 0..config.cells() {
        let w = c64::new(tau * config.power(t, user), 0.0);
        let r = corr.r_user[t][user][cell].as_mat();
        for j in 0..n_t {
            for i in 0..n_t {
                q[(i, j)] += r[(i, j)] * w;
            }
        }
    }
    if attacked && user == config.m_index() && config.eavesdropper_power > 0.0 {
        let w = c64::new(tau * config.eavesdropper_power, 0.0);
        let r = corr.r_eve[cell].as_mat();
        for j in 0..n_t {
            for i in 0..n_t {
                q[(i, j)] += r[(i, j)] * w;
            }
        }
    }
    q
}

/// MMSE filter C = √P_lk R^l_lk Q^{-1}; the estimate is ĥ = C ỹ.
///
/// The attack flag states whether the eavesdropper transmits during
/// training; its term enters the Gram matrix only for pilot m, which is
/// the only contaminated pilot either way.
pub fn mmse_filter(
    cell: usize,
    user: usize,
    corr: &CorrelationSet,
    config: &SystemConfig,
    attacked: bool,
) -> Result<Mat<c64>> {
    let q = HermitianMatrix::symmetrized(despread_gram(cell, user, corr, config, attacked), true);
    let r = corr.r_user[cell][user][cell].as_mat();
    // C = √P R Q⁻¹ = √P (Q⁻¹ R)ᴴ for Hermitian Q, R.
    let x = solve_hermitian(&q, r)?;
    let p_sqrt = config.power(cell, user).sqrt();
    Ok(Mat::from_fn(corr.n_t(), corr.n_t(), |i, j| {
        x[(j, i)].conj() * p_sqrt
    }))
}

/// MMSE estimate with its exact covariance split.
#[derive(Debug, Clone)]
pub struct ChannelEstimate {
    pub h_hat: Col<c64>,
    pub r_hat: HermitianMatrix,
    pub r_err: HermitianMatrix,
}

/// Applies a filter built by [`mmse_filter`] for the same target and
/// attack flag, and returns the estimate together with R̂ = √P τ C R and
/// R_err = R − R̂. The filter is checked against the flag through the
/// defining identity C Q = √P R before anything else.
pub fn mmse_estimate(
    obs: &DespreadObservation,
    filter: &Mat<c64>,
    corr: &CorrelationSet,
    config: &SystemConfig,
    attacked: bool,
) -> Result<ChannelEstimate> {
    let n_t = corr.n_t();
    let r = corr.r_user[obs.cell][obs.user][obs.cell].as_mat();
    {
        let q = despread_gram(obs.cell, obs.user, corr, config, attacked);
        let back = filter * &q;
        let p_sqrt = config.power(obs.cell, obs.user).sqrt();
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for j in 0..n_t {
            for i in 0..n_t {
                num += (back[(i, j)] - r[(i, j)] * p_sqrt).norm_sqr();
                den += (r[(i, j)] * p_sqrt).norm_sqr();
            }
        }
        if num.sqrt() > 1e-6 * den.sqrt().max(1e-12) {
            return Err(Error::Inconsistent(format!(
                "filter does not solve C·Q = √P·R for this attack flag (residual {:.3e})",
                num.sqrt() / den.sqrt().max(1e-12)
            )));
        }
    }
    let h_hat = filter * &obs.y;
    let scale = c64::new(
        config.power(obs.cell, obs.user).sqrt() * config.pilot_length as f64,
        0.0,
    );
    let prod = filter * r;
    let r_hat =
        HermitianMatrix::symmetrized(Mat::from_fn(n_t, n_t, |i, j| prod[(i, j)] * scale), true);
    let err = Mat::from_fn(n_t, n_t, |i, j| r[(i, j)] - r_hat.as_mat()[(i, j)]);
    let r_err = HermitianMatrix::symmetrized(err, true);
    let eig = hermitian_eig(&r_err)?;
    let min = eig.eigenvalues[n_t - 1];
    let scale_ref = corr.r_user[obs.cell][obs.user][obs.cell].trace().max(1.0);
    if min < -1e-8 * scale_ref {
        return Err(Error::Inconsistent(format!(
            "estimation error covariance has eigenvalue {min:.3e}; filter and attack flag likely mismatched"
        )));
    }
    Ok(ChannelEstimate {
        h_hat,
        r_hat,
        r_err,
    })
}

/// Sample-covariance estimate of P_E R^l_E from repeated despread
/// observations of pilot m: the known user and noise contributions are
/// subtracted from (1/T) Σ ỹ ỹᴴ and the remainder is divided by τ²,
/// symmetrized, and clamped to the PSD cone.
pub fn estimate_eavesdropper_covariance(
    samples: &[DespreadObservation],
    corr: &CorrelationSet,
    config: &SystemConfig,
) -> Result<HermitianMatrix> {
    if samples.len() < 2 {
        return Err(Error::Validation(format!(
            "need at least 2 observation slots, got {}",
            samples.len()
        )));
    }
    let cell = samples[0].cell;
    let m = config.m_index();
    if samples.iter().any(|s| s.cell != cell || s.user != m) {
        return Err(Error::Validation(
            "all observation slots must target the attacked user's pilot at one base station"
                .into(),
        ));
    }
    let n_t = corr.n_t();
    let tau = config.pilot_length as f64;
    let mut acc = Mat::<c64>::zeros(n_t, n_t);
    for s in samples {
        for j in 0..n_t {
            for i in 0..n_t {
                acc[(i, j)] += s.y[i] * s.y[j].conj();
            }
        }
    }
    let inv_t = 1.0 / samples.len() as f64;
    let inv_tau2 = 1.0 / (tau * tau);
    let mut rem = Mat::<c64>::zeros(n_t, n_t);
    for j in 0..n_t {
        for i in 0..n_t {
            let mut v = acc[(i, j)] * inv_t;
            for t in 0..config.cells() {
                v -= corr.r_user[t][m][cell].as_mat()[(i, j)] * (tau * tau * config.power(t, m));
            }
            if i == j {
                v -= c64::new(tau * config.uplink_noise, 0.0);
            }
            rem[(i, j)] = v * inv_tau2;
        }
    }
    let sym = HermitianMatrix::symmetrized(rem, false);
    let eig = hermitian_eig(&sym)?;
    let mut clamped = Mat::<c64>::zeros(n_t, n_t);
    for idx in 0..n_t {
        let lambda = eig.eigenvalues[idx].max(0.0);
        if lambda == 0.0 {
            continue;
        }
        for j in 0..n_t {
            for i in 0..n_t {
                clamped[(i, j)] += eig.vectors[(i, idx)] * eig.vectors[(j, idx)].conj() * lambda;
            }
        }
    }
    Ok(HermitianMatrix::symmetrized(clamped, true))
}
