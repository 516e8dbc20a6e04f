use faer::c64;
use secmimo::channel::{
    build_scenario, correlation_matrix, laplacian_pas, load_scenario, sample_channel_draw,
    save_scenario, steering_vector, AngularProfile, PowerSpec, ScenarioSampler, SystemConfig,
};
use secmimo::linalg::hermitian_eig;
use secmimo::rng::{substream, StreamPurpose};
use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

fn reference_config(n_t: usize, quad_points: usize) -> SystemConfig {
    SystemConfig {
        interfering_cells: 3,
        users_per_cell: 5,
        bs_antennas: n_t,
        pilot_length: 10,
        target_user: 1,
        uplink_power: PowerSpec::Uniform(1.0),
        eavesdropper_power: 1.0,
        uplink_noise: 1.0,
        downlink_snr: 1.0,
        cross_cell_gain: 0.1,
        eavesdropper_cross_gain: None,
        angular_spread: FRAC_PI_2,
        seed: 42,
        quad_points,
    }
}

#[test]
fn pas_peak_matches_closed_form() {
    let profile = AngularProfile::new(0.7, FRAC_PI_2).unwrap();
    let expect = 1.0 / (SQRT_2 * FRAC_PI_2 * (1.0 - (-2.0 * SQRT_2).exp()));
    assert!((laplacian_pas(0.7, &profile) - expect).abs() < 1e-15);
}

#[test]
fn pas_is_symmetric_and_vanishes_outside_support() {
    let profile = AngularProfile::new(0.2, 0.3).unwrap();
    let a = laplacian_pas(0.2 + 0.8, &profile);
    let b = laplacian_pas(0.2 - 0.8, &profile);
    assert!((a - b).abs() < 1e-15);
    assert!(a > 0.0);
    assert_eq!(laplacian_pas(0.2 + PI + 1e-9, &profile), 0.0);
    assert_eq!(laplacian_pas(0.2 - PI - 1e-9, &profile), 0.0);
}

#[test]
fn pas_integrates_to_one() {
    for sigma in [0.05, 0.3, FRAC_PI_2] {
        let profile = AngularProfile::new(-0.4, sigma).unwrap();
        let m = 200_000usize;
        let h = 2.0 * PI / m as f64;
        let mut total = 0.0;
        for i in 0..=m {
            let theta = profile.mean_aoa - PI + h * i as f64;
            let w = if i == 0 || i == m { 0.5 } else { 1.0 };
            total += w * h * laplacian_pas(theta, &profile);
        }
        assert!(
            (total - 1.0).abs() < 1e-6,
            "sigma {sigma}: integral {total}"
        );
    }
}

#[test]
fn rejects_nonpositive_spread() {
    assert!(AngularProfile::new(0.0, 0.0).is_err());
    assert!(AngularProfile::new(0.0, -1.0).is_err());
}

#[test]
fn steering_broadside_is_all_ones() {
    let a = steering_vector(0.0, 6);
    for i in 0..6 {
        assert!((a[i] - c64::new(1.0, 0.0)).norm() < 1e-15);
    }
}

#[test]
fn steering_endfire_alternates_sign() {
    let a = steering_vector(FRAC_PI_2, 4);
    for i in 0..4 {
        let expect = if i % 2 == 0 { 1.0 } else { -1.0 };
        assert!((a[i] - c64::new(expect, 0.0)).norm() < 1e-12);
    }
}

#[test]
fn steering_norm_squared_is_antenna_count() {
    let a = steering_vector(0.83, 17);
    let n2: f64 = (0..17).map(|i| a[i].norm_sqr()).sum();
    assert!((n2 - 17.0).abs() < 1e-12);
}

#[test]
fn correlation_diagonal_is_constant_trace_share() {
    let profile = AngularProfile::new(0.3, 0.4).unwrap();
    let r = correlation_matrix(&profile, 8, 8.0, 1024).unwrap();
    for i in 0..8 {
        assert!((r.as_mat()[(i, i)] - c64::new(1.0, 0.0)).norm() < 1e-12);
    }
    assert!((r.trace() - 8.0).abs() < 1e-9);
}

#[test]
fn correlation_trace_rescale_is_exact() {
    let profile = AngularProfile::new(-1.1, 0.2).unwrap();
    let r = correlation_matrix(&profile, 5, 0.5, 512).unwrap();
    assert!((r.trace() - 0.5).abs() < 1e-12);
}

#[test]
fn correlation_rejects_bad_arguments() {
    let profile = AngularProfile::new(0.0, 0.3).unwrap();
    assert!(correlation_matrix(&profile, 4, 0.0, 1024).is_err());
    assert!(correlation_matrix(&profile, 4, -1.0, 1024).is_err());
    assert!(correlation_matrix(&profile, 4, 4.0, 255).is_err());
    assert!(correlation_matrix(&profile, 0, 4.0, 1024).is_err());
}

// Doubling the quadrature grid must not move any entry by more than 1e-8.
#[test]
fn correlation_refinement_is_stable() {
    for sigma in [0.05, 0.3, FRAC_PI_2] {
        for mean in [0.0, 0.37, -1.2] {
            let profile = AngularProfile::new(mean, sigma).unwrap();
            let coarse = correlation_matrix(&profile, 8, 8.0, 4096).unwrap();
            let fine = correlation_matrix(&profile, 8, 8.0, 8192).unwrap();
            let mut worst = 0.0f64;
            for i in 0..8 {
                for j in 0..8 {
                    worst = worst.max((coarse.as_mat()[(i, j)] - fine.as_mat()[(i, j)]).norm());
                }
            }
            assert!(
                worst < 1e-8,
                "sigma {sigma} mean {mean}: refinement gap {worst:.3e}"
            );
        }
    }
}

// A vanishing angular spread concentrates the spectrum on the steering
// direction of the mean angle.
#[test]
fn correlation_narrow_spread_approaches_rank_one() {
    let mean = 0.45;
    let n = 8;
    let profile = AngularProfile::new(mean, 1e-4).unwrap();
    let r = correlation_matrix(&profile, n, n as f64, 4096).unwrap();
    let eig = hermitian_eig(&r).unwrap();
    assert!(eig.eigenvalues[1] / eig.eigenvalues[0] < 1e-6);
    let a = steering_vector(mean, n);
    let mut inner = c64::new(0.0, 0.0);
    for i in 0..n {
        inner += eig.vectors[(i, 0)].conj() * a[i];
    }
    assert!(
        inner.norm_sqr() / n as f64 > 1.0 - 1e-5,
        "top eigenvector misaligned with steering direction"
    );
}

#[test]
fn correlation_is_numerically_psd() {
    for sigma in [0.05, FRAC_PI_2] {
        let profile = AngularProfile::new(0.9, sigma).unwrap();
        let r = correlation_matrix(&profile, 16, 16.0, 4096).unwrap();
        let eig = hermitian_eig(&r).unwrap();
        let min = eig.eigenvalues[15];
        let max = eig.eigenvalues[0];
        assert!(
            min >= -1e-10 * max,
            "sigma {sigma}: min eigenvalue {min:.3e}"
        );
    }
}

#[test]
fn config_validation_catches_bad_fields() {
    let good = reference_config(16, 1024);
    assert!(good.validate().is_ok());

    let mut c = good.clone();
    c.pilot_length = 4;
    assert!(c.validate().is_err(), "pilot shorter than user count");

    let mut c = good.clone();
    c.target_user = 0;
    assert!(c.validate().is_err());
    c.target_user = 6;
    assert!(c.validate().is_err());

    let mut c = good.clone();
    c.bs_antennas = 5;
    assert!(c.validate().is_err(), "antennas must exceed users");

    let mut c = good.clone();
    c.cross_cell_gain = 0.0;
    assert!(c.validate().is_err());
    c.cross_cell_gain = 1.5;
    assert!(c.validate().is_err());

    let mut c = good.clone();
    c.uplink_power = PowerSpec::PerUser(vec![vec![1.0; 5]; 3]);
    assert!(c.validate().is_err(), "power matrix with wrong cell count");

    let mut c = good.clone();
    c.quad_points = 128;
    assert!(c.validate().is_err());
}

#[test]
fn config_json_rejects_unknown_fields() {
    let text = r#"{
        "interfering_cells": 3, "users_per_cell": 5, "bs_antennas": 16,
        "pilot_length": 10, "target_user": 1, "uplink_power": 1.0,
        "eavesdropper_power": 1.0, "uplink_noise": 1.0, "downlink_snr": 1.0,
        "cross_cell_gain": 0.1, "angular_spread": 1.5707963, "seed": 1,
        "bogus": 7
    }"#;
    assert!(serde_json::from_str::<SystemConfig>(text).is_err());
}

#[test]
fn config_json_defaults_quad_points() {
    let text = r#"{
        "interfering_cells": 1, "users_per_cell": 2, "bs_antennas": 8,
        "pilot_length": 4, "target_user": 1, "uplink_power": [[1.0, 2.0], [0.5, 0.5]],
        "eavesdropper_power": 1.0, "uplink_noise": 1.0, "downlink_snr": 1.0,
        "cross_cell_gain": 0.1, "angular_spread": 1.0, "seed": 1
    }"#;
    let c: SystemConfig = serde_json::from_str(text).unwrap();
    assert_eq!(c.quad_points, 4096);
    assert_eq!(c.power(0, 1), 2.0);
    assert_eq!(c.power(1, 0), 0.5);
    assert!(c.validate().is_ok());
}

#[test]
fn scenario_has_expected_shape_and_traces() {
    let config = reference_config(8, 512);
    let corr = build_scenario(&config).unwrap();
    assert_eq!(corr.cells(), 4);
    assert_eq!(corr.users(), 5);
    assert_eq!(corr.n_t(), 8);
    for l in 0..4 {
        for k in 0..5 {
            for p in 0..4 {
                let expect = if p == l { 8.0 } else { 0.8 };
                let tr = corr.r_user[l][k][p].trace();
                assert!((tr - expect).abs() < 1e-6, "user ({l},{k},{p}) trace {tr}");
            }
        }
    }
    for p in 0..4 {
        let expect = if p == 0 { 8.0 } else { 0.8 };
        assert!((corr.r_eve[p].trace() - expect).abs() < 1e-6);
    }
}

#[test]
fn scenario_honours_eavesdropper_gain_override() {
    let mut config = reference_config(8, 512);
    config.eavesdropper_cross_gain = Some(0.5);
    let corr = build_scenario(&config).unwrap();
    assert!((corr.r_eve[0].trace() - 8.0).abs() < 1e-6);
    assert!((corr.r_eve[2].trace() - 4.0).abs() < 1e-6);
    // User matrices keep the ordinary cross-cell gain.
    assert!((corr.r_user[1][0][0].trace() - 0.8).abs() < 1e-6);
}

#[test]
fn scenario_build_is_deterministic() {
    let config = reference_config(8, 512);
    let a = build_scenario(&config).unwrap();
    let b = build_scenario(&config).unwrap();
    for l in 0..4 {
        for k in 0..5 {
            for p in 0..4 {
                let ma = a.r_user[l][k][p].as_mat();
                let mb = b.r_user[l][k][p].as_mat();
                for i in 0..8 {
                    for j in 0..8 {
                        assert_eq!(ma[(i, j)], mb[(i, j)]);
                    }
                }
            }
        }
    }
    for p in 0..4 {
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(a.r_eve[p].as_mat()[(i, j)], b.r_eve[p].as_mat()[(i, j)]);
            }
        }
    }
}

#[test]
fn scenario_seed_changes_geometry() {
    let config = reference_config(8, 512);
    let mut other = config.clone();
    other.seed = 43;
    let a = build_scenario(&config).unwrap();
    let b = build_scenario(&other).unwrap();
    let mut differs = false;
    for i in 0..8 {
        for j in 0..8 {
            if a.r_user[0][0][0].as_mat()[(i, j)] != b.r_user[0][0][0].as_mat()[(i, j)] {
                differs = true;
            }
        }
    }
    assert!(differs);
}

#[test]
fn sampled_draws_match_their_covariance() {
    let mut config = reference_config(6, 512);
    config.interfering_cells = 1;
    config.users_per_cell = 2;
    config.pilot_length = 2;
    let corr = build_scenario(&config).unwrap();
    let sampler = ScenarioSampler::new(&corr).unwrap();
    let mut rng = substream(config.seed, StreamPurpose::Probe, 0);
    let n = 6usize;
    let trials = 100_000usize;
    let mut acc = faer::Mat::<c64>::zeros(n, n);
    for _ in 0..trials {
        let draw = sampler.sample_channel_draw(&mut rng);
        let h = &draw.h_user[0][0][0];
        for i in 0..n {
            for j in 0..n {
                acc[(i, j)] += h[i] * h[j].conj();
            }
        }
    }
    let scale = 1.0 / trials as f64;
    let r = corr.r_user[0][0][0].as_mat();
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            num += (acc[(i, j)] * scale - r[(i, j)]).norm_sqr();
            den += r[(i, j)].norm_sqr();
        }
    }
    let rel = (num / den).sqrt();
    assert!(rel < 0.05, "empirical covariance off by {rel:.4}");
}

#[test]
fn sampling_respects_rank_structure() {
    // Rank-one covariance: every draw is proportional to the eigenvector.
    let n = 5;
    let a = steering_vector(0.3, n);
    let outer = faer::Mat::from_fn(n, n, |i, j| a[i] * a[j].conj());
    let r = secmimo::linalg::HermitianMatrix::from_mat_psd(outer).unwrap();
    let sqrt = secmimo::linalg::hermitian_sqrt(&r).unwrap();
    let mut rng = substream(9, StreamPurpose::Probe, 1);
    let g = faer::Col::<c64>::from_fn(n, |_| {
        use rand::Rng;
        let re: f64 = rng.sample(rand_distr::StandardNormal);
        let im: f64 = rng.sample(rand_distr::StandardNormal);
        c64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    });
    let h = &sqrt * &g;
    // h must be parallel to a: check |<a,h>|^2 == |a|^2 |h|^2.
    let mut inner = c64::new(0.0, 0.0);
    let mut ha = 0.0f64;
    let mut hh = 0.0f64;
    for i in 0..n {
        inner += a[i].conj() * h[i];
        ha += a[i].norm_sqr();
        hh += h[i].norm_sqr();
    }
    assert!((inner.norm_sqr() - ha * hh).abs() < 1e-9 * ha * hh);
}

#[test]
fn one_shot_sampling_matches_reused_sampler() {
    let mut config = reference_config(6, 512);
    config.interfering_cells = 1;
    config.users_per_cell = 2;
    config.pilot_length = 2;
    let corr = build_scenario(&config).unwrap();
    let sampler = ScenarioSampler::new(&corr).unwrap();
    let mut rng_a = substream(7, StreamPurpose::Trial, 0);
    let mut rng_b = substream(7, StreamPurpose::Trial, 0);
    let a = sampler.sample_channel_draw(&mut rng_a);
    let b = sample_channel_draw(&corr, &mut rng_b).unwrap();
    for p in 0..2 {
        for i in 0..6 {
            assert_eq!(a.h_eve[p][i], b.h_eve[p][i]);
            assert_eq!(a.h_user[1][1][p][i], b.h_user[1][1][p][i]);
        }
    }
}

#[test]
fn scenario_file_round_trip_is_exact() {
    let mut config = reference_config(6, 512);
    config.interfering_cells = 1;
    config.users_per_cell = 2;
    config.pilot_length = 7;
    config.eavesdropper_cross_gain = Some(0.25);
    let corr = build_scenario(&config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scenario.json");
    save_scenario(&path, &config, &corr).unwrap();
    let (config2, corr2) = load_scenario(&path).unwrap();
    assert_eq!(config, config2);
    for l in 0..2 {
        for k in 0..2 {
            for p in 0..2 {
                let ma = corr.r_user[l][k][p].as_mat();
                let mb = corr2.r_user[l][k][p].as_mat();
                for i in 0..6 {
                    for j in 0..6 {
                        assert_eq!(ma[(i, j)], mb[(i, j)], "user ({l},{k},{p}) entry ({i},{j})");
                    }
                }
            }
        }
    }
    for p in 0..2 {
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(
                    corr.r_eve[p].as_mat()[(i, j)],
                    corr2.r_eve[p].as_mat()[(i, j)]
                );
            }
        }
    }
}

#[test]
fn scenario_file_rejects_corrupted_blob() {
    let mut config = reference_config(6, 512);
    config.interfering_cells = 1;
    config.users_per_cell = 2;
    config.pilot_length = 2;
    let corr = build_scenario(&config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scenario.json");
    save_scenario(&path, &config, &corr).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    // Truncate the blob by a chunk: the loader must notice.
    let shortened = {
        let start = text.find("\"matrix_blob\": \"").unwrap() + "\"matrix_blob\": \"".len();
        let mut t = text.clone();
        t.replace_range(start..start + 64, "");
        t
    };
    std::fs::write(&path, shortened).unwrap();
    assert!(load_scenario(&path).is_err());
}
