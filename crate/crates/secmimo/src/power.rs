//! Closed-form signal/AN power allocation: the asymptotic secrecy rate as a
//! rational function of the signal share p, its stationary points, the
//! positive-secrecy feasibility threshold, and the i.i.d. single-cell
//! attack-power thresholds.

use crate::asymptotic::ThetaSet;
use crate::error::{Error, Result};

/// Coefficients of the secrecy exponential 2^{R_sec} = (a₁p²+b₁p+c₁)/(a₂p²+b₂p+c₂)
/// after substituting q = (1 − Kp)/(N_t − K).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticCoefficients {
    pub a1: f64,
    pub b1: f64,
    pub c1: f64,
    pub a2: f64,
    pub b2: f64,
    pub c2: f64,
}

pub fn quadratic_coefficients(
    thetas: &ThetaSet,
    gamma: f64,
    n_t: usize,
    k: usize,
) -> QuadraticCoefficients {
    let nk = (n_t - k) as f64;
    let kf = k as f64;
    let alpha1 = gamma * (nk * thetas.theta_m + nk * thetas.theta_bp - kf * thetas.theta_bq);
    let alpha2 = gamma * (nk * thetas.theta_bp - kf * thetas.theta_bq);
    let alpha3 = gamma * (nk * thetas.theta_ee - kf * thetas.theta_eq);
    let alpha4 = -gamma * kf * thetas.theta_eq;
    let beta1 = gamma * thetas.theta_bq + nk;
    let beta3 = gamma * thetas.theta_eq + nk;
    QuadraticCoefficients {
        a1: alpha1 * alpha4,
        b1: alpha1 * beta3 + alpha4 * beta1,
        c1: beta1 * beta3,
        a2: alpha2 * alpha3,
        b2: alpha2 * beta3 + alpha3 * beta1,
        c2: beta1 * beta3,
    }
}

/// Secrecy rate at signal share p, from the rational form. Nonpositive
/// numerator or denominator marks a p outside the physically meaningful
/// region (negative AN power has pushed an SINR below -1); the rate is
/// clamped to zero there like everywhere else.
fn rate_at(c: &QuadraticCoefficients, p: f64) -> f64 {
    let num = (c.a1 * p + c.b1) * p + c.c1;
    let den = (c.a2 * p + c.b2) * p + c.c2;
    if num <= 0.0 || den <= 0.0 {
        return 0.0;
    }
    (num / den).log2().max(0.0)
}

/// Stationary points of the rational secrecy rate, from the printed root
/// formulas. Degenerate leading coefficients and negative discriminants
/// yield no roots rather than spurious candidates.
pub fn stationary_points(coeffs: &QuadraticCoefficients) -> (Option<f64>, Option<f64>) {
    let a = coeffs.a1 * coeffs.b2 - coeffs.a2 * coeffs.b1;
    let scale = (coeffs.a1 * coeffs.b2)
        .abs()
        .max((coeffs.a2 * coeffs.b1).abs());
    if a.abs() <= 1e-12 * scale.max(1.0) {
        return (None, None);
    }
    let half_b = coeffs.a1 * coeffs.c2 - coeffs.a2 * coeffs.c1;
    let disc = half_b * half_b - a * (coeffs.b1 - coeffs.b2) * coeffs.c1;
    if disc < 0.0 {
        return (None, None);
    }
    let root = disc.sqrt();
    (Some((-half_b + root) / a), Some((-half_b - root) / a))
}

/// Candidate domain for the closed-form optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllocationDomain {
    /// The printed rule verbatim: candidates {1} ∪ {roots in [0, 1]}. With
    /// K > 1 the boundary candidate p = 1 implies q < 0 under the total
    /// power constraint; kept for comparability.
    CorollaryLiteral,
    /// Candidates restricted to q ≥ 0: {1/K} ∪ {roots in [0, 1/K]}.
    FeasibleQ,
}

/// Outcome of a power-share optimization; every evaluated candidate is kept.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationResult {
    pub p_star: f64,
    pub q_star: f64,
    pub rate_at_star: f64,
    pub candidates: Vec<(f64, f64)>,
}

fn pick_best(candidates: Vec<(f64, f64)>, n_t: usize, k: usize, clamp_q: bool) -> AllocationResult {
    let (mut p_star, mut best) = candidates[0];
    for &(p, rate) in &candidates[1..] {
        if rate > best {
            best = rate;
            p_star = p;
        }
    }
    let q = (1.0 - k as f64 * p_star) / (n_t - k) as f64;
    AllocationResult {
        p_star,
        q_star: if clamp_q { q.max(0.0) } else { q },
        rate_at_star: best,
        candidates,
    }
}

pub fn optimal_power(
    thetas: &ThetaSet,
    gamma: f64,
    n_t: usize,
    k: usize,
    domain: AllocationDomain,
) -> Result<AllocationResult> {
    if k == 0 || n_t <= k {
        return Err(Error::Validation(format!(
            "power optimization needs 0 < K < N_t, got K = {k}, N_t = {n_t}"
        )));
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::Validation(format!(
            "downlink SNR must be finite and nonnegative, got {gamma}"
        )));
    }
    let coeffs = quadratic_coefficients(thetas, gamma, n_t, k);
    let (upper, clamp_q) = match domain {
        AllocationDomain::CorollaryLiteral => (1.0, false),
        AllocationDomain::FeasibleQ => (1.0 / k as f64, true),
    };
    let mut ps = vec![upper];
    let (p1, p2) = stationary_points(&coeffs);
    for root in [p1, p2].into_iter().flatten() {
        if (0.0..=upper).contains(&root) {
            ps.push(root);
        }
    }
    let candidates = ps.into_iter().map(|p| (p, rate_at(&coeffs, p))).collect();
    Ok(pick_best(candidates, n_t, k, clamp_q))
}

/// Where positive secrecy is possible as a function of the signal share.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeasibilityKind {
    PAbove,
    PBelow,
    Always,
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityThreshold {
    pub kind: FeasibilityKind,
    pub threshold: Option<f64>,
}

/// Positive secrecy at share p > 0 is equivalent to (a₁−a₂)p + (b₁−b₂) > 0,
/// since c₁ = c₂ cancels the constant term.
pub fn feasibility_threshold(coeffs: &QuadraticCoefficients) -> FeasibilityThreshold {
    let da = coeffs.a1 - coeffs.a2;
    let db = coeffs.b1 - coeffs.b2;
    let scale = coeffs.a1.abs().max(coeffs.a2.abs());
    if da.abs() <= 1e-12 * scale.max(1.0) {
        return FeasibilityThreshold {
            kind: if db > 0.0 {
                FeasibilityKind::Always
            } else {
                FeasibilityKind::Never
            },
            threshold: None,
        };
    }
    FeasibilityThreshold {
        kind: if da > 0.0 {
            FeasibilityKind::PAbove
        } else {
            FeasibilityKind::PBelow
        },
        threshold: Some(-db / da),
    }
}

/// Signal-share threshold below which secure single-cell transmission over
/// i.i.d. channels is possible, at finite downlink SNR γ.
///
/// Inputs are the user's and eavesdropper's training powers and average
/// channel gains, the pilot length, and the training noise level. Requires
/// positive β_B and γ; a zero β_E sends the threshold to +∞ (no
/// eavesdropper channel means no constraint).
pub fn iid_single_cell_threshold(
    p01: f64,
    beta_b: f64,
    p_e: f64,
    beta_e: f64,
    tau: f64,
    n0: f64,
    gamma: f64,
) -> f64 {
    let d = n0 + tau * (p01 * beta_b + p_e * beta_e);
    let middle = d * (p01 * beta_b * beta_b - p_e * beta_e * beta_e)
        / (p01 * beta_b * beta_b * gamma * beta_e * (n0 + tau * p01 * beta_b));
    let last =
        p_e * beta_e * (n0 + tau * p_e * beta_e) / (p01 * beta_b * (n0 + tau * p01 * beta_b));
    1.0 + middle - last
}

/// High-SNR limit of the single-cell threshold: the finite-SNR middle term
/// vanishes as 1/γ.
pub fn iid_threshold_high_snr(
    p01: f64,
    beta_b: f64,
    p_e: f64,
    beta_e: f64,
    tau: f64,
    n0: f64,
) -> f64 {
    1.0 - p_e * beta_e * (n0 + tau * p_e * beta_e) / (p01 * beta_b * (n0 + tau * p01 * beta_b))
}

/// Exhaustive oracle over the feasible share grid {0, step, 2·step, …, 1/K}.
pub fn grid_search_rate(
    thetas: &ThetaSet,
    gamma: f64,
    n_t: usize,
    k: usize,
    p_grid_step: f64,
) -> Result<AllocationResult> {
    if k == 0 || n_t <= k {
        return Err(Error::Validation(format!(
            "grid search needs 0 < K < N_t, got K = {k}, N_t = {n_t}"
        )));
    }
    if !(p_grid_step > 0.0 && p_grid_step <= 1e-2) {
        return Err(Error::Validation(format!(
            "grid step must lie in (0, 1e-2], got {p_grid_step}"
        )));
    }
    let coeffs = quadratic_coefficients(thetas, gamma, n_t, k);
    let upper = 1.0 / k as f64;
    let mut candidates = Vec::new();
    let mut p = 0.0;
    while p < upper {
        candidates.push((p, rate_at(&coeffs, p)));
        p += p_grid_step;
    }
    candidates.push((upper, rate_at(&coeffs, upper)));
    Ok(pick_best(candidates, n_t, k, true))
}
