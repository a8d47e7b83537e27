use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rankcorr::{compute_weights, rank_icc, Axis, ObservedValue, VariableKind, WeightScheme};
use rankcorr_sim::{generate, generate_latent, observe, ClusterSize, Scenario, ScenarioConfig};

fn cov(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0)
}

fn numeric(v: &ObservedValue<f64>) -> f64 {
    match *v {
        ObservedValue::Numeric(x) => x,
        ObservedValue::Ordinal(c) => c as f64,
    }
}

#[test]
fn latent_moments_match_configuration() {
    let cfg = ScenarioConfig::new(Scenario::I, 0.6, -0.4, 100_000, ClusterSize::Fixed(2));
    let lat = generate_latent(&cfg, &mut ChaCha8Rng::seed_from_u64(5));
    let ux: Vec<f64> = lat.iter().map(|c| c.u.0).collect();
    let uy: Vec<f64> = lat.iter().map(|c| c.u.1).collect();
    let rx: Vec<f64> = lat.iter().map(|c| c.r[0].0).collect();
    let ry: Vec<f64> = lat.iter().map(|c| c.r[0].1).collect();
    for (got, want) in [
        (cov(&ux, &ux), 1.0),
        (cov(&uy, &uy), 1.0),
        (cov(&ux, &uy), 0.6),
        (cov(&rx, &rx), 1.0),
        (cov(&ry, &ry), 1.0),
        (cov(&rx, &ry), -0.4),
    ] {
        assert!((got - want).abs() < 0.01, "{got} vs {want}");
    }
    let mx = ux.iter().sum::<f64>() / ux.len() as f64;
    let my = uy.iter().sum::<f64>() / uy.len() as f64;
    assert!((mx - 1.0).abs() < 0.01 && (my + 1.0).abs() < 0.01);
}

#[test]
fn exponentiated_scenario_shares_draws() {
    let base = ScenarioConfig::new(Scenario::I, 0.8, 0.7, 30, ClusterSize::Uniform { min: 1, max: 9 });
    let one = generate(&base, &mut ChaCha8Rng::seed_from_u64(9));
    let two = generate(
        &ScenarioConfig {
            scenario: Scenario::II,
            ..base
        },
        &mut ChaCha8Rng::seed_from_u64(9),
    );
    for (c1, c2) in one.clusters().iter().zip(two.clusters()) {
        assert_eq!(c1.len(), c2.len());
        for ((x1, y1), (x2, y2)) in c1.observations.iter().zip(&c2.observations) {
            assert_eq!(x1, x2);
            assert_eq!(numeric(y1).exp(), numeric(y2));
        }
    }
}

#[test]
fn negative_pairs_average_to_cluster_effect() {
    let cfg = ScenarioConfig::new(Scenario::NegativePairs, 0.8, -0.7, 200, ClusterSize::Fixed(2));
    let lat = generate_latent(&cfg, &mut ChaCha8Rng::seed_from_u64(2));
    let ds = observe(&cfg, &lat);
    for (c, l) in ds.clusters().iter().zip(&lat) {
        assert_eq!(c.len(), 2);
        let mx = (numeric(&c.observations[0].0) + numeric(&c.observations[1].0)) / 2.0;
        let my = (numeric(&c.observations[0].1) + numeric(&c.observations[1].1)) / 2.0;
        assert!((mx - l.u.0).abs() < 1e-12 && (my - l.u.1).abs() < 1e-12);
    }
    let w = compute_weights(&ds, WeightScheme::EqualCluster).unwrap();
    let big = generate(
        &ScenarioConfig { n: 20_000, ..cfg },
        &mut ChaCha8Rng::seed_from_u64(3),
    );
    let wb = compute_weights(&big, WeightScheme::EqualCluster).unwrap();
    let icc = rank_icc(&big, Axis::X, &wb).unwrap().gamma_i;
    assert!((icc + 0.48).abs() < 0.03, "{icc}");
    assert!(rank_icc(&ds, Axis::Y, &w).is_ok());
}

#[test]
fn sample_rank_icc_near_half_without_correlation() {
    let cfg = ScenarioConfig::new(Scenario::I, 0.0, 0.0, 2000, ClusterSize::Fixed(20));
    let ds = generate(&cfg, &mut ChaCha8Rng::seed_from_u64(11));
    let w = compute_weights(&ds, WeightScheme::EqualCluster).unwrap();
    let icc = rank_icc(&ds, Axis::X, &w).unwrap().gamma_i;
    assert!((icc - 0.48).abs() < 0.03, "{icc}");
}

#[test]
fn ordinal_data_uses_all_levels_equally() {
    let cfg = ScenarioConfig::new(Scenario::Ordinal { levels: 5 }, 0.8, 0.7, 4000, ClusterSize::Fixed(10));
    let ds = generate(&cfg, &mut ChaCha8Rng::seed_from_u64(4));
    assert!(matches!(ds.kind(Axis::X), VariableKind::Ordinal { levels } if levels.len() == 5));
    let mut counts = [0usize; 5];
    for c in ds.clusters() {
        for (x, _) in &c.observations {
            counts[numeric(x) as usize] += 1;
        }
    }
    let n = ds.n_obs() as f64;
    for c in counts {
        assert!((c as f64 / n - 0.2).abs() < 0.02, "{counts:?}");
    }
}

#[test]
fn same_seed_same_data() {
    let cfg = ScenarioConfig::new(Scenario::III, 0.3, 0.2, 50, ClusterSize::Uniform { min: 1, max: 50 });
    let a = generate(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
    let b = generate(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
    assert_eq!(a, b);
}
