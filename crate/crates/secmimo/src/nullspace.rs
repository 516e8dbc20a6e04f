//! Null-space countermeasure against pilot contamination: train and precode
//! the target user inside the orthogonal complement of the eavesdropper's
//! correlation support, so the contaminated direction never reaches the
//! precoder.

use faer::{c64, Col, Mat};
use rand_chacha::ChaCha8Rng;

use crate::channel::{sample_cn_vector, ChannelDraw, CorrelationSet, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::{
    herm_trace_product, inner, null_space_basis, solve_hermitian, HermitianMatrix,
};
use crate::training::ChannelEstimate;

/// Basis kept by the type invariant `‖R_E V‖_F ≤ 1e-6·tr(R_E)`.
const LEAKAGE_REL_TOL: f64 = 1e-6;

/// Relative eigenvalue cutoff used when the caller does not pick one.
pub const DEFAULT_RANK_REL_TOL: f64 = 1e-8;

/// Projected-domain data for the reference cell's target user.
///
/// `v` spans the effective null space of the eavesdropper's correlation at
/// the reference base station (orthonormal columns), `r_null[t]` are the
/// projected correlations of the pilot-sharing users of every cell, and
/// `r_hat_null` is the posterior covariance of the projected MMSE estimate.
#[derive(Debug, Clone)]
pub struct NullSpaceContext {
    pub v: Mat<c64>,
    pub m_dim: usize,
    pub r_null: Vec<HermitianMatrix>,
    pub r_hat_null: HermitianMatrix,
    /// Projected MMSE filter; deliberately blind to the eavesdropper term.
    pub(crate) filter: Mat<c64>,
}

/// Builds the projected training/precoding context for user m of the
/// reference cell. `rel_tol` is the relative eigenvalue cutoff that defines
/// the effective null space of the eavesdropper correlation.
pub fn build_nullspace_context(
    corr: &CorrelationSet,
    config: &SystemConfig,
    rel_tol: f64,
) -> Result<NullSpaceContext> {
    config.validate()?;
    let n_t = corr.n_t();
    let r_e = &corr.r_eve[0];
    let v = null_space_basis(r_e, rel_tol)?;
    let m_dim = v.ncols();
    if m_dim == 0 {
        return Err(Error::NullSpaceNotApplicable { rank: n_t });
    }

    let mut ortho_dev: f64 = 0.0;
    for a in 0..m_dim {
        for b in 0..m_dim {
            let mut g = c64::new(0.0, 0.0);
            for i in 0..n_t {
                g += v[(i, a)].conj() * v[(i, b)];
            }
            let target = if a == b { 1.0 } else { 0.0 };
            ortho_dev = ortho_dev.max((g - c64::new(target, 0.0)).norm());
        }
    }
    if ortho_dev > 1e-9 {
        return Err(Error::Inconsistent(format!(
            "null-space basis lost orthonormality: max deviation {ortho_dev:.3e}"
        )));
    }

    // The kept directions must genuinely annihilate the eavesdropper,
    // otherwise contaminated training power re-enters the projected chain.
    let leak_mat = r_e.as_mat() * &v;
    let mut leak_sq = 0.0;
    for j in 0..m_dim {
        for i in 0..n_t {
            leak_sq += leak_mat[(i, j)].norm_sqr();
        }
    }
    let leakage = leak_sq.sqrt();
    let bound = LEAKAGE_REL_TOL * r_e.trace();
    if leakage > bound {
        return Err(Error::Inconsistent(format!(
            "retained eigendirections carry eavesdropper power: ‖R_E V‖_F = {leakage:.3e} \
             exceeds {bound:.3e}; the eavesdropper correlation has no genuine null space \
             at cutoff {rel_tol:.1e}"
        )));
    }

    let m = config.m_index();
    let r_null: Vec<HermitianMatrix> = (0..config.cells())
        .map(|t| {
            let projected = v.adjoint() * corr.r_user[t][m][0].as_mat() * &v;
            HermitianMatrix::symmetrized(projected, true)
        })
        .collect();

    let tau = config.pilot_length as f64;
    let mut q = Mat::<c64>::zeros(m_dim, m_dim);
    for i in 0..m_dim {
        q[(i, i)] = c64::new(config.uplink_noise, 0.0);
    }
    for (t, r) in r_null.iter().enumerate() {
        let w = c64::new(tau * config.power(t, m), 0.0);
        let rm = r.as_mat();
        for j in 0..m_dim {
            for i in 0..m_dim {
                q[(i, j)] += rm[(i, j)] * w;
            }
        }
    }
    let q = HermitianMatrix::symmetrized(q, true);
    let x = solve_hermitian(&q, r_null[0].as_mat())?;
    let p_sqrt = config.power(0, m).sqrt();
    let filter = Mat::from_fn(m_dim, m_dim, |i, j| x[(j, i)].conj() * p_sqrt);
    let r_hat_null = {
        let prod = &filter * r_null[0].as_mat();
        let scale = p_sqrt * tau;
        HermitianMatrix::symmetrized(
            Mat::from_fn(m_dim, m_dim, |i, j| {
                (prod[(i, j)] + prod[(j, i)].conj()) * (0.5 * scale)
            }),
            true,
        )
    };

    Ok(NullSpaceContext {
        v,
        m_dim,
        r_null,
        r_hat_null,
        filter,
    })
}

/// Simulates one projected training slot and estimates the target user's
/// channel inside the null space.
///
/// The eavesdropper's projected term is kept in the observation: with a
/// valid context its covariance VᴴR_EV is negligible, and keeping it is
/// what demonstrates the cancellation.
pub fn nullspace_mmse_estimate(
    ctx: &NullSpaceContext,
    draw: &ChannelDraw,
    config: &SystemConfig,
    rng: &mut ChaCha8Rng,
) -> Result<ChannelEstimate> {
    let m = config.m_index();
    let tau = config.pilot_length as f64;
    let mut y = projected_despread(ctx, draw, config, m, tau);
    let noise = sample_cn_vector(ctx.m_dim, rng);
    let noise_scale = (tau * config.uplink_noise).sqrt();
    for i in 0..ctx.m_dim {
        y[i] += noise[i] * noise_scale;
    }
    let h_hat = &ctx.filter * &y;
    let r_err = {
        let a = ctx.r_null[0].as_mat();
        let b = ctx.r_hat_null.as_mat();
        HermitianMatrix::symmetrized(
            Mat::from_fn(ctx.m_dim, ctx.m_dim, |i, j| a[(i, j)] - b[(i, j)]),
            true,
        )
    };
    Ok(ChannelEstimate {
        h_hat,
        r_hat: ctx.r_hat_null.clone(),
        r_err,
    })
}

/// Noise-free part of the projected despread observation; shared with the
/// Monte Carlo engine, which adds its own noise draw to preserve the
/// stream layout.
pub(crate) fn projected_despread(
    ctx: &NullSpaceContext,
    draw: &ChannelDraw,
    config: &SystemConfig,
    m: usize,
    tau: f64,
) -> Col<c64> {
    let mut y = Col::<c64>::zeros(ctx.m_dim);
    for t in 0..config.cells() {
        let scale = tau * config.power(t, m).sqrt();
        let h = &draw.h_user[t][m][0];
        for j in 0..ctx.m_dim {
            let mut acc = c64::new(0.0, 0.0);
            for i in 0..h.nrows() {
                acc += ctx.v[(i, j)].conj() * h[i];
            }
            y[j] += acc * scale;
        }
    }
    if config.eavesdropper_power > 0.0 {
        let scale = tau * config.eavesdropper_power.sqrt();
        let h = &draw.h_eve[0];
        for j in 0..ctx.m_dim {
            let mut acc = c64::new(0.0, 0.0);
            for i in 0..h.nrows() {
                acc += ctx.v[(i, j)].conj() * h[i];
            }
            y[j] += acc * scale;
        }
    }
    y
}

/// Lifts a projected estimate back to the antenna domain as a unit-norm
/// precoder `w = V ĥ_null / ‖ĥ_null‖`.
pub fn nullspace_precoder(estimate: &ChannelEstimate, ctx: &NullSpaceContext) -> Result<Col<c64>> {
    if estimate.h_hat.nrows() != ctx.m_dim {
        return Err(Error::Validation(format!(
            "estimate dimension {} does not match the null-space dimension {}",
            estimate.h_hat.nrows(),
            ctx.m_dim
        )));
    }
    let norm_sq = inner(estimate.h_hat.as_ref(), estimate.h_hat.as_ref()).re;
    if norm_sq <= 0.0 {
        return Err(Error::DegenerateEstimate);
    }
    let scale = norm_sq.sqrt().recip();
    let lifted = &ctx.v * &estimate.h_hat;
    Ok(Col::from_fn(lifted.nrows(), |i| lifted[i] * scale))
}

/// Asymptotic rate of the null-space design: the signal quality term is
/// computed from the projected correlations, the eavesdropper's reference-cell
/// correlation is zeroed in the leakage terms, and the split is all-signal
/// (p = 1/K, q = 0). Everything else keeps the unmodified multi-cell scheme.
pub fn nullspace_asymptotic_rate(
    corr: &CorrelationSet,
    config: &SystemConfig,
    gamma: f64,
    rel_tol: f64,
) -> Result<f64> {
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::Validation(format!(
            "downlink SNR must be finite and nonnegative, got {gamma}"
        )));
    }
    let ctx = build_nullspace_context(corr, config, rel_tol)?;
    let thetas = crate::asymptotic::compute_theta_set(corr, config, true)?;
    let tr_hat = ctx.r_hat_null.trace();
    if tr_hat <= 0.0 {
        return Err(Error::DegenerateScenario(
            "projected estimate covariance has nonpositive trace".into(),
        ));
    }
    let theta_m_null = tr_hat
        + (herm_trace_product(ctx.r_null[0].as_mat(), ctx.r_hat_null.as_mat())
            - herm_trace_product(ctx.r_hat_null.as_mat(), ctx.r_hat_null.as_mat()))
            / tr_hat;
    let p = 1.0 / config.users_per_cell as f64;
    // With q = 0 the AN terms vanish and a zeroed eavesdropper correlation
    // kills the leakage numerator, so only the user's SINR survives.
    let sinr_user = p * gamma * theta_m_null / (p * gamma * thetas.theta_bp + 1.0);
    Ok((1.0 + sinr_user).log2())
}
