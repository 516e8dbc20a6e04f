use faer::{c64, Col, Mat};
use secmimo::channel::{build_scenario, CorrelationSet, PowerSpec, ScenarioSampler, SystemConfig};
use secmimo::downlink::{monte_carlo_secrecy_rate, power_split, Scheme};
use secmimo::linalg::{null_space_basis, HermitianMatrix};
use secmimo::nullspace::{
    build_nullspace_context, nullspace_asymptotic_rate, nullspace_mmse_estimate, nullspace_precoder,
};
use secmimo::rng::{substream, StreamPurpose};
use secmimo::training::ChannelEstimate;
use secmimo::{Error, ErrorKind};

fn diag(entries: &[f64]) -> HermitianMatrix {
    let n = entries.len();
    HermitianMatrix::symmetrized(
        Mat::from_fn(n, n, |i, j| {
            if i == j {
                c64::new(entries[i], 0.0)
            } else {
                c64::new(0.0, 0.0)
            }
        }),
        true,
    )
}

fn identity_scaled(n: usize, beta: f64) -> HermitianMatrix {
    diag(&vec![beta; n])
}

fn col_norm(v: &Col<c64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Single cell, two users, eavesdropper supported on the first four of ten
/// coordinates; the complement is an exact six-dimensional null space.
fn exact_rank_setup(p_e: f64, seed: u64) -> (CorrelationSet, SystemConfig) {
    let n = 10;
    let ramp: Vec<f64> = (0..n).map(|i| 0.6 + 0.1 * i as f64).collect();
    let corr = CorrelationSet {
        r_user: vec![vec![vec![diag(&ramp)], vec![identity_scaled(n, 0.9)]]],
        r_eve: vec![diag(&[2.0, 1.5, 1.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])],
    };
    let config = SystemConfig {
        interfering_cells: 0,
        users_per_cell: 2,
        bs_antennas: n,
        pilot_length: 4,
        target_user: 1,
        uplink_power: PowerSpec::Uniform(1.0),
        eavesdropper_power: p_e,
        uplink_noise: 1.0,
        downlink_snr: 2.0,
        cross_cell_gain: 1.0,
        eavesdropper_cross_gain: None,
        angular_spread: 0.5,
        seed,
        quad_points: 512,
    };
    (corr, config)
}

#[test]
fn full_rank_isotropic_eavesdropper_leaves_no_null_space() {
    let (mut corr, config) = exact_rank_setup(1.0, 1);
    corr.r_eve[0] = identity_scaled(10, 0.9);
    let err = build_nullspace_context(&corr, &config, 1e-6).unwrap_err();
    match err {
        Error::NullSpaceNotApplicable { rank } => assert_eq!(rank, 10),
        other => panic!("unexpected error {other:?}"),
    }
    assert_eq!(
        build_nullspace_context(&corr, &config, 1e-6)
            .unwrap_err()
            .kind(),
        ErrorKind::Validation
    );
}

#[test]
fn block_support_yields_the_exact_complement() {
    let (corr, config) = exact_rank_setup(1.0, 2);
    let ctx = build_nullspace_context(&corr, &config, 1e-6).unwrap();
    assert_eq!(ctx.m_dim, 6);
    assert_eq!(ctx.v.ncols(), 6);
    assert_eq!(ctx.v.nrows(), 10);

    // V annihilates the eavesdropper correlation.
    let leak = corr.r_eve[0].as_mat() * &ctx.v;
    let leak_norm: f64 = (0..6)
        .flat_map(|j| (0..10).map(move |i| (i, j)))
        .map(|(i, j)| leak[(i, j)].norm_sqr())
        .sum::<f64>()
        .sqrt();
    assert!(leak_norm < 1e-10);

    // Orthonormal columns.
    for a in 0..6 {
        for b in 0..6 {
            let mut g = c64::new(0.0, 0.0);
            for i in 0..10 {
                g += ctx.v[(i, a)].conj() * ctx.v[(i, b)];
            }
            let target = if a == b { 1.0 } else { 0.0 };
            assert!((g - c64::new(target, 0.0)).norm() < 1e-12);
        }
    }

    // Projected correlations keep their trace mass on the complement: the
    // ramp covariance restricted to the last six coordinates.
    let expect: f64 = (4..10).map(|i| 0.6 + 0.1 * i as f64).sum();
    assert!((ctx.r_null[0].trace() - expect).abs() < 1e-9);
    assert_eq!(ctx.r_null.len(), config.cells());
    assert!(ctx.r_hat_null.trace() > 0.0);
}

#[test]
fn exact_null_directions_annihilate_eavesdropper_draws() {
    let (corr, config) = exact_rank_setup(1.0, 3);
    let ctx = build_nullspace_context(&corr, &config, 1e-6).unwrap();
    let sampler = ScenarioSampler::new(&corr).unwrap();
    let mut rng = substream(config.seed, StreamPurpose::Trial, 0);
    for _ in 0..20 {
        let draw = sampler.sample_channel_draw(&mut rng);
        let he = &draw.h_eve[0];
        let projected = ctx.v.adjoint() * he;
        assert!(col_norm(&projected) <= 1e-8 * col_norm(he).max(1e-9));
    }
}

#[test]
fn one_dimensional_null_space_reduces_to_scalar_mmse() {
    let n = 3;
    let c_gain = 0.7;
    let corr = CorrelationSet {
        r_user: vec![vec![vec![diag(&[0.4, 0.9, c_gain])]]],
        r_eve: vec![diag(&[1.0, 1.0, 0.0])],
    };
    let config = SystemConfig {
        interfering_cells: 0,
        users_per_cell: 1,
        bs_antennas: n,
        pilot_length: 2,
        target_user: 1,
        uplink_power: PowerSpec::Uniform(0.8),
        eavesdropper_power: 1.0,
        uplink_noise: 0.6,
        downlink_snr: 1.0,
        cross_cell_gain: 1.0,
        eavesdropper_cross_gain: None,
        angular_spread: 0.5,
        seed: 4,
        quad_points: 512,
    };
    let ctx = build_nullspace_context(&corr, &config, 1e-6).unwrap();
    assert_eq!(ctx.m_dim, 1);
    let p: f64 = 0.8;
    let tau = 2.0;
    let n0 = 0.6;
    // Scalar MMSE posterior τ P g² / (N₀ + τ P g); since the posterior is
    // √P τ c g for the filter coefficient c, this pins c = √P g/(N₀ + τ P g).
    let posterior_expect = tau * p * c_gain * c_gain / (n0 + tau * p * c_gain);
    assert!((ctx.r_hat_null.trace() - posterior_expect).abs() < 1e-12);
    assert!((ctx.r_null[0].trace() - c_gain).abs() < 1e-12);
}

#[test]
fn projected_estimates_match_their_posterior_covariance() {
    let (corr, config) = exact_rank_setup(2.0, 5);
    let ctx = build_nullspace_context(&corr, &config, 1e-6).unwrap();
    let sampler = ScenarioSampler::new(&corr).unwrap();
    let mut rng = substream(config.seed, StreamPurpose::Trial, 0);
    let m_dim = ctx.m_dim;
    let trials = 20_000;
    let mut acc = Mat::<c64>::zeros(m_dim, m_dim);
    for _ in 0..trials {
        let draw = sampler.sample_channel_draw(&mut rng);
        let est = nullspace_mmse_estimate(&ctx, &draw, &config, &mut rng).unwrap();
        for j in 0..m_dim {
            for i in 0..m_dim {
                acc[(i, j)] += est.h_hat[i] * est.h_hat[j].conj();
            }
        }
        // The projected posterior is handed back unchanged.
        assert!((est.r_hat.trace() - ctx.r_hat_null.trace()).abs() < 1e-12);
    }
    let scale = 1.0 / trials as f64;
    let target = ctx.r_hat_null.as_mat();
    let mut err_sq = 0.0;
    let mut target_sq = 0.0;
    for j in 0..m_dim {
        for i in 0..m_dim {
            err_sq += (acc[(i, j)] * scale - target[(i, j)]).norm_sqr();
            target_sq += target[(i, j)].norm_sqr();
        }
    }
    assert!(
        err_sq.sqrt() <= 0.05 * target_sq.sqrt(),
        "empirical covariance off by {:.3}%",
        100.0 * err_sq.sqrt() / target_sq.sqrt()
    );
}

#[test]
fn precoder_is_unit_norm_and_avoids_the_eavesdropper() {
    let (corr, config) = exact_rank_setup(1.5, 6);
    let ctx = build_nullspace_context(&corr, &config, 1e-6).unwrap();
    let sampler = ScenarioSampler::new(&corr).unwrap();
    let mut rng = substream(config.seed, StreamPurpose::Trial, 1);
    let draw = sampler.sample_channel_draw(&mut rng);
    let est = nullspace_mmse_estimate(&ctx, &draw, &config, &mut rng).unwrap();
    let w = nullspace_precoder(&est, &ctx).unwrap();
    assert!((col_norm(&w) - 1.0).abs() < 1e-10);
    // wᴴ R_E w vanishes on the exact-rank scenario.
    let rw = corr.r_eve[0].as_mat() * &w;
    let quad: c64 = w.iter().zip(rw.iter()).map(|(a, b)| a.conj() * *b).sum();
    assert!(quad.norm() <= 1e-10 * corr.r_eve[0].trace() / 10.0);
}

#[test]
fn precoder_rejects_mismatched_and_degenerate_estimates() {
    let (corr, config) = exact_rank_setup(1.0, 7);
    let ctx = build_nullspace_context(&corr, &config, 1e-6).unwrap();
    let bad_dim = ChannelEstimate {
        h_hat: Col::<c64>::zeros(3),
        r_hat: identity_scaled(3, 1.0),
        r_err: identity_scaled(3, 1.0),
    };
    assert_eq!(
        nullspace_precoder(&bad_dim, &ctx).unwrap_err().kind(),
        ErrorKind::Validation
    );
    let degenerate = ChannelEstimate {
        h_hat: Col::<c64>::zeros(ctx.m_dim),
        r_hat: identity_scaled(ctx.m_dim, 1.0),
        r_err: identity_scaled(ctx.m_dim, 1.0),
    };
    assert!(matches!(
        nullspace_precoder(&degenerate, &ctx).unwrap_err(),
        Error::DegenerateEstimate
    ));
}

#[test]
fn projected_eavesdropper_has_full_null_space() {
    let (corr, config) = exact_rank_setup(1.0, 8);
    let ctx = build_nullspace_context(&corr, &config, 1e-6).unwrap();
    let projected =
        HermitianMatrix::symmetrized(ctx.v.adjoint() * corr.r_eve[0].as_mat() * &ctx.v, true);
    let basis = null_space_basis(&projected, 1e-6).unwrap();
    assert_eq!(basis.ncols(), ctx.m_dim);
}

#[test]
fn secrecy_is_invariant_to_attack_power_on_an_exact_null_space() {
    let (corr, config1) = exact_rank_setup(1.0, 12);
    let (_, config10) = {
        let mut pair = exact_rank_setup(10.0, 12);
        pair.1.seed = 12;
        pair
    };
    let split = power_split(0.5, 10, 2).unwrap();
    let scheme = Scheme::NullSpace { rank_rel_tol: 1e-6 };
    let a = monte_carlo_secrecy_rate(&corr, &config1, &split, scheme, 60).unwrap();
    let b = monte_carlo_secrecy_rate(&corr, &config10, &split, scheme, 60).unwrap();
    assert!(a.secrecy > 0.0);
    assert!(
        (a.secrecy - b.secrecy).abs() <= 1e-9 * a.secrecy.max(1e-9),
        "secrecy moved from {} to {} under a 10x stronger attack",
        a.secrecy,
        b.secrecy
    );
    // The eavesdropper's rate is numerically dead in both cases.
    assert!(a.rate_eve < 1e-12 && b.rate_eve < 1e-12);
}

#[test]
fn narrow_spread_scenario_admits_the_countermeasure() {
    // The Laplacian power profile with full angular support decays
    // geometrically in the eigenindex, so the spectrum floor is set by the
    // spread: σ = 0.05 rad pushes the smallest ratios below 1e-8 at this
    // array size, which is what an effective null space means here.
    let config = SystemConfig {
        interfering_cells: 0,
        users_per_cell: 2,
        bs_antennas: 24,
        pilot_length: 4,
        target_user: 1,
        uplink_power: PowerSpec::Uniform(1.0),
        eavesdropper_power: 1.0,
        uplink_noise: 1.0,
        downlink_snr: 2.0,
        cross_cell_gain: 1.0,
        eavesdropper_cross_gain: None,
        angular_spread: 0.05,
        seed: 31,
        quad_points: 2048,
    };
    let corr = build_scenario(&config).unwrap();
    let ctx = build_nullspace_context(&corr, &config, 1e-8).unwrap();
    assert!(ctx.m_dim > 0, "narrow spread must leave null directions");

    let split = power_split(0.5, 24, 2).unwrap();
    let scheme = Scheme::NullSpace { rank_rel_tol: 1e-8 };
    let mut weak_cfg = config.clone();
    weak_cfg.eavesdropper_power = 1.0;
    let mut strong_cfg = config.clone();
    strong_cfg.eavesdropper_power = 10.0;
    let weak = monte_carlo_secrecy_rate(&corr, &weak_cfg, &split, scheme, 150).unwrap();
    let strong = monte_carlo_secrecy_rate(&corr, &strong_cfg, &split, scheme, 150).unwrap();
    assert!(weak.secrecy > 0.0);
    let rel_change = (weak.secrecy - strong.secrecy).abs() / weak.secrecy;
    assert!(
        rel_change < 0.02,
        "secrecy changed {:.2}% across attack powers",
        100.0 * rel_change
    );
}

#[test]
fn nullspace_beats_naive_matched_filter_under_a_strong_attack() {
    let n = 12;
    let corr = CorrelationSet {
        r_user: vec![vec![
            vec![identity_scaled(n, 1.0)],
            vec![identity_scaled(n, 1.0)],
        ]],
        r_eve: vec![diag(&[
            3.0, 2.5, 2.0, 1.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        ])],
    };
    let config = SystemConfig {
        interfering_cells: 0,
        users_per_cell: 2,
        bs_antennas: n,
        pilot_length: 4,
        target_user: 1,
        uplink_power: PowerSpec::Uniform(1.0),
        eavesdropper_power: 5.0,
        uplink_noise: 1.0,
        downlink_snr: 4.0,
        cross_cell_gain: 1.0,
        eavesdropper_cross_gain: None,
        angular_spread: 0.5,
        seed: 40,
        quad_points: 512,
    };
    let split = power_split(0.5, n, 2).unwrap();
    let naive = monte_carlo_secrecy_rate(&corr, &config, &split, Scheme::NaiveMf, 300).unwrap();
    let nulled = monte_carlo_secrecy_rate(
        &corr,
        &config,
        &split,
        Scheme::NullSpace { rank_rel_tol: 1e-6 },
        300,
    )
    .unwrap();
    assert!(
        nulled.rate_eve * 100.0 < naive.rate_eve,
        "eavesdropper rate {} under the countermeasure vs {} naive",
        nulled.rate_eve,
        naive.rate_eve
    );
    assert!(nulled.secrecy > naive.secrecy);
}

#[test]
fn zero_eavesdropper_correlation_reduces_to_the_plain_rate() {
    let n = 8;
    let ramp: Vec<f64> = (0..n).map(|i| 0.5 + 0.15 * i as f64).collect();
    let corr = CorrelationSet {
        r_user: vec![
            vec![
                vec![diag(&ramp), identity_scaled(n, 0.4)],
                vec![identity_scaled(n, 0.8), identity_scaled(n, 0.3)],
            ],
            vec![
                vec![identity_scaled(n, 0.2), identity_scaled(n, 0.6)],
                vec![identity_scaled(n, 0.25), identity_scaled(n, 0.7)],
            ],
        ],
        r_eve: vec![HermitianMatrix::zero(n), HermitianMatrix::zero(n)],
    };
    let config = SystemConfig {
        interfering_cells: 1,
        users_per_cell: 2,
        bs_antennas: n,
        pilot_length: 3,
        target_user: 1,
        uplink_power: PowerSpec::Uniform(1.0),
        eavesdropper_power: 1.0,
        uplink_noise: 1.0,
        downlink_snr: 3.0,
        cross_cell_gain: 0.3,
        eavesdropper_cross_gain: None,
        angular_spread: 0.5,
        seed: 50,
        quad_points: 512,
    };
    let gamma = config.downlink_snr;
    let rate = nullspace_asymptotic_rate(&corr, &config, gamma, 1e-6).unwrap();

    // With R_E = 0 the projection is the identity and the projected chain is
    // the ordinary attack-free one.
    let thetas = secmimo::asymptotic::compute_theta_set(&corr, &config, false).unwrap();
    let attacked = secmimo::asymptotic::compute_theta_set(&corr, &config, true).unwrap();
    let p = 0.5;
    let expect = (1.0 + p * gamma * thetas.theta_m / (p * gamma * attacked.theta_bp + 1.0)).log2();
    assert!(
        (rate - expect).abs() < 1e-9,
        "rate {rate} vs expected {expect}"
    );
}

#[test]
fn asymptotic_rate_validates_snr() {
    let (corr, config) = exact_rank_setup(1.0, 60);
    assert_eq!(
        nullspace_asymptotic_rate(&corr, &config, -1.0, 1e-6)
            .unwrap_err()
            .kind(),
        ErrorKind::Validation
    );
}

#[test]
fn full_support_eavesdropper_defeats_every_cutoff() {
    // Wide angular spread gives the eavesdropper full-rank correlation: at
    // tight cutoffs there is no null space at all, and at loose cutoffs the
    // kept directions still carry real eavesdropper power, which violates
    // the leakage bound. No cutoff produces a usable context.
    let config = SystemConfig {
        interfering_cells: 0,
        users_per_cell: 2,
        bs_antennas: 16,
        pilot_length: 4,
        target_user: 1,
        uplink_power: PowerSpec::Uniform(1.0),
        eavesdropper_power: 1.0,
        uplink_noise: 1.0,
        downlink_snr: 2.0,
        cross_cell_gain: 1.0,
        eavesdropper_cross_gain: None,
        angular_spread: std::f64::consts::FRAC_PI_2,
        seed: 70,
        quad_points: 512,
    };
    let corr = build_scenario(&config).unwrap();
    let mut saw_not_applicable = false;
    let mut saw_leakage = false;
    for rel_tol in [1e-8, 1e-4, 0.05, 0.3, 0.6, 0.9] {
        match build_nullspace_context(&corr, &config, rel_tol) {
            Err(Error::NullSpaceNotApplicable { .. }) => saw_not_applicable = true,
            Err(Error::Inconsistent(msg)) => {
                assert!(msg.contains("eavesdropper power"));
                saw_leakage = true;
            }
            Err(other) => panic!("unexpected error {other:?}"),
            Ok(ctx) => panic!(
                "cutoff {rel_tol} accepted a full-support eavesdropper with M = {}",
                ctx.m_dim
            ),
        }
    }
    assert!(saw_not_applicable && saw_leakage);
}
