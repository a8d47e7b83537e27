mod common;

use common::{latent, tied};
use proptest::prelude::*;
use rankcorr::rankcore::{d_correction, rank_icc, total_spearman};
use rankcorr::{compute_weights, weighted_mid_cdf, Axis, ClusteredDataset, ObservedValue, WeightScheme};

/// Tie-corrected Spearman: Pearson correlation of midranks, ranks found by
/// counting.
fn spearman_by_counting(x: &[f64], y: &[f64]) -> f64 {
    let ranks = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|a| {
                let below = v.iter().filter(|b| *b < a).count() as f64;
                let equal = v.iter().filter(|b| *b == a).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    };
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..x.len() {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Ridit correlation with every cluster weighted 1/n and every member of a
/// cluster 1/(n k_i); ridits by brute-force double sums.
fn ridit_correlation(ds: &ClusteredDataset<f64>) -> f64 {
    let n = ds.n_clusters() as f64;
    let obs: Vec<(f64, f64, f64)> = ds
        .clusters()
        .iter()
        .flat_map(|c| {
            let w = 1.0 / (n * c.len() as f64);
            c.observations.iter().map(move |(x, y)| (x.key(), y.key(), w))
        })
        .collect();
    let ridit = |v: f64, pick: fn(&(f64, f64, f64)) -> f64| -> f64 {
        obs.iter()
            .map(|o| {
                let u = pick(o);
                o.2 * if u < v { 1.0 } else if u == v { 0.5 } else { 0.0 }
            })
            .sum()
    };
    let rx: Vec<f64> = obs.iter().map(|o| ridit(o.0, |o| o.0)).collect();
    let ry: Vec<f64> = obs.iter().map(|o| ridit(o.1, |o| o.1)).collect();
    // The weighted mean of a ridit is exactly 1/2.
    let mut c = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (j, o) in obs.iter().enumerate() {
        c += o.2 * (rx[j] - 0.5) * (ry[j] - 0.5);
        vx += o.2 * (rx[j] - 0.5).powi(2);
        vy += o.2 * (ry[j] - 0.5).powi(2);
    }
    c / (vx * vy).sqrt()
}

#[test]
fn equal_observation_total_matches_tie_corrected_spearman() {
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let ds = tied(seed, 6 + (seed as usize % 15), 6, 5);
        let w = compute_weights(&ds, WeightScheme::EqualObservation).unwrap();
        let got = total_spearman(&ds, &w).unwrap();
        let want = spearman_by_counting(&ds.keys(Axis::X), &ds.keys(Axis::Y));
        worst = worst.max((got - want).abs());
    }
    assert!(worst <= 1e-12, "max deviation {worst:e}");
}

#[test]
fn equal_cluster_total_matches_ridit_correlation() {
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let ds = if seed % 2 == 0 { tied(seed, 12, 7, 4) } else { latent(seed, 15, 1..=6, 0.5, 0.3) };
        let w = compute_weights(&ds, WeightScheme::EqualCluster).unwrap();
        worst = worst.max((total_spearman(&ds, &w).unwrap() - ridit_correlation(&ds)).abs());
    }
    assert!(worst <= 1e-10, "max deviation {worst:e}");
}

#[test]
fn mid_cdf_is_shifted_midrank() {
    let ds = tied(7, 30, 5, 6);
    let vals: Vec<ObservedValue<f64>> = ds.keys(Axis::X).into_iter().map(ObservedValue::Numeric).collect();
    let w = compute_weights(&ds, WeightScheme::EqualObservation).unwrap();
    let cdf = weighted_mid_cdf(&vals, &w).unwrap();
    let keys = ds.keys(Axis::X);
    let n = keys.len() as f64;
    for &v in &keys {
        let below = keys.iter().filter(|&&u| u < v).count() as f64;
        let equal = keys.iter().filter(|&&u| u == v).count() as f64;
        let midrank = below + (equal + 1.0) / 2.0;
        assert!((cdf.eval(v).2 - (midrank - 0.5) / n).abs() < 1e-14);
    }
}

#[test]
fn equal_sizes_make_schemes_agree() {
    let ds = latent(3, 20, 4..=4, 0.6, 0.2);
    let wc = compute_weights(&ds, WeightScheme::EqualCluster).unwrap();
    let wo = compute_weights(&ds, WeightScheme::EqualObservation).unwrap();
    assert!((total_spearman(&ds, &wc).unwrap() - total_spearman(&ds, &wo).unwrap()).abs() < 1e-14);
    let (a, b) = (rank_icc(&ds, Axis::X, &wc).unwrap(), rank_icc(&ds, Axis::X, &wo).unwrap());
    assert!((a.gamma_i - b.gamma_i).abs() < 1e-14);
    assert!((a.d_hat - b.d_hat).abs() < 1e-14);
}

#[test]
fn rank_icc_near_zero_without_cluster_effect() {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let mut hits = 0;
    for seed in 0..40 {
        let mut r = common::rng(100 + seed);
        let groups: Vec<(String, Vec<(f64, f64)>)> = (0..50)
            .map(|i| (format!("g{i}"), (0..4).map(|_| (r.sample(StandardNormal), r.sample(StandardNormal))).collect()))
            .collect();
        let ds = ClusteredDataset::from_numeric(groups).unwrap();
        let w = compute_weights(&ds, WeightScheme::EqualCluster).unwrap();
        if rank_icc(&ds, Axis::X, &w).unwrap().gamma_i.abs() < 3.0 / 50f64.sqrt() {
            hits += 1;
        }
    }
    assert!(hits >= 38, "{hits}/40 within 3/sqrt(n)");
}

#[test]
fn d_correction_vanishes_for_large_clusters() {
    let ds = latent(11, 20, 400..=400, 0.5, 0.5);
    let w = compute_weights(&ds, WeightScheme::EqualCluster).unwrap();
    let small = latent(11, 20, 2..=2, 0.5, 0.5);
    let ws = compute_weights(&small, WeightScheme::EqualCluster).unwrap();
    let big_d = d_correction(&ds, Axis::X, &w).unwrap();
    let small_d = d_correction(&small, Axis::X, &ws).unwrap();
    assert!(big_d.abs() < 0.01, "{big_d}");
    assert!(small_d < 0.0 && small_d.abs() > 10.0 * big_d.abs());
}

fn arb_dataset() -> impl Strategy<Value = ClusteredDataset<f64>> {
    prop::collection::vec(prop::collection::vec((-20i32..20, -20i32..20), 1..6), 3..10).prop_filter_map(
        "non-constant",
        |groups| {
            let ds = ClusteredDataset::from_numeric(
                groups
                    .into_iter()
                    .enumerate()
                    .map(|(i, g)| (format!("c{i}"), g.into_iter().map(|(a, b)| (a as f64, b as f64)).collect())),
            )
            .ok()?;
            let w = compute_weights(&ds, WeightScheme::EqualCluster).ok()?;
            total_spearman(&ds, &w).ok()?;
            Some(ds)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn monotone_transforms_leave_rank_quantities_unchanged(ds in arb_dataset()) {
        let t = ds
            .map_numeric(Axis::X, |v| (v / 7.0).exp() * 3.0 - 1.0).unwrap()
            .map_numeric(Axis::Y, |v| v.powi(3) + 2.0 * v).unwrap();
        for scheme in [WeightScheme::EqualCluster, WeightScheme::EqualObservation] {
            let (w, wt) = (compute_weights(&ds, scheme).unwrap(), compute_weights(&t, scheme).unwrap());
            prop_assert_eq!(total_spearman(&ds, &w).unwrap(), total_spearman(&t, &wt).unwrap());
            for axis in [Axis::X, Axis::Y] {
                let (a, b) = (rank_icc(&ds, axis, &w), rank_icc(&t, axis, &wt));
                if let (Ok(a), Ok(b)) = (a, b) {
                    prop_assert_eq!(a.gamma_i, b.gamma_i);
                    prop_assert_eq!(a.d_hat, b.d_hat);
                }
            }
        }
    }

    #[test]
    fn total_is_symmetric_and_bounded(ds in arb_dataset()) {
        let w = compute_weights(&ds, WeightScheme::EqualCluster).unwrap();
        let g = total_spearman(&ds, &w).unwrap();
        prop_assert!((-1.0..=1.0).contains(&g));
        let s = ds.swap_axes();
        prop_assert!((g - total_spearman(&s, &w).unwrap()).abs() < 1e-14);
    }
}
