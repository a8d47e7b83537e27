mod common;

use common::{latent, rel_err, tied};
use rand::Rng;
use rankcorr::cpm::{cluster_median_coeffs, fit_cpm, fit_cpm_keys, psr_all, CpmOptions, LinkFunction};
use rankcorr::{Axis, ClusteredDataset};

fn opts() -> CpmOptions<f64> {
    CpmOptions::default()
}

#[test]
fn saturated_fit_reproduces_cumulative_proportions() {
    let mut r = common::rng(5);
    let keys: Vec<f64> = (0..300).map(|_| r.random_range(0..12) as f64).collect();
    let mut sorted = keys.clone();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    for link in LinkFunction::ALL {
        let fit = fit_cpm_keys(&keys, &vec![0; keys.len()], vec!["only".into()], link, &opts()).unwrap();
        assert!(fit.converged);
        for (c, &a) in fit.alpha.iter().enumerate() {
            let prop = keys.iter().filter(|&&k| k <= sorted[c]).count() as f64 / keys.len() as f64;
            assert!((link.cdf(a) - prop).abs() < 1e-8, "{link} category {c}");
        }
    }
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    let ds = tied(21, 12, 6, 7);
    let mut r = common::rng(9);
    for link in LinkFunction::ALL {
        let fit = fit_cpm(&ds, Axis::X, link, &opts()).unwrap();
        for _ in 0..5 {
            // random point near the optimum, intercepts kept increasing
            let mut theta = fit.theta();
            for v in theta.iter_mut() {
                *v += r.random_range(-0.3..0.3);
            }
            let m = fit.alpha.len();
            for c in 1..m {
                if theta[c] <= theta[c - 1] + 0.05 {
                    theta[c] = theta[c - 1] + 0.05;
                }
            }
            let g = fit.gradient_at(&theta);
            for k in 0..theta.len() {
                let h = 1e-5 * theta[k].abs().max(1.0);
                let (mut up, mut dn) = (theta.clone(), theta.clone());
                up[k] += h;
                dn[k] -= h;
                let fd = (fit.loglik_at(&up) - fit.loglik_at(&dn)) / (2.0 * h);
                assert!(rel_err(g[k], fd) < 1e-5 || (g[k] - fd).abs() < 1e-7, "{link} k={k}: {} vs {fd}", g[k]);
            }
        }
    }
}

#[test]
fn strictly_increasing_transform_is_bit_identical() {
    let ds = latent(4, 15, 3..=8, 0.5, 0.4);
    let t = ds.map_numeric(Axis::X, |v| (v * 0.7).exp()).unwrap();
    for link in LinkFunction::ALL {
        let a = fit_cpm(&ds, Axis::X, link, &opts()).unwrap();
        let b = fit_cpm(&t, Axis::X, link, &opts()).unwrap();
        assert_eq!(a.beta, b.beta);
        assert_eq!(a.alpha, b.alpha);
        assert_eq!(a.loglik, b.loglik);
        assert_eq!(psr_all(&a), psr_all(&b));
    }
}

#[test]
fn cell_probabilities_are_coherent() {
    let ds = tied(8, 10, 8, 9);
    for link in LinkFunction::ALL {
        let fit = fit_cpm(&ds, Axis::Y, link, &opts()).unwrap();
        for i in 0..fit.n_clusters() {
            let p = fit.cell_probabilities(i);
            assert!(p.iter().all(|&v| v >= 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }
}

#[test]
fn latent_shift_is_recovered_on_the_probit_scale() {
    use rand_distr::StandardNormal;
    let mut r = common::rng(17);
    let groups: Vec<(String, Vec<(f64, f64)>)> = [0.0, 1.0, 2.0]
        .iter()
        .enumerate()
        .map(|(i, &shift)| {
            let obs = (0..400)
                .map(|_| {
                    let z: f64 = r.sample(StandardNormal);
                    (shift + z, 0.0)
                })
                .collect();
            (format!("c{i}"), obs)
        })
        .collect();
    let ds = ClusteredDataset::from_numeric(groups).unwrap();
    let fit = fit_cpm(&ds, Axis::X, LinkFunction::Probit, &opts()).unwrap();
    let b = cluster_median_coeffs(&fit);
    assert!(b.median_identity_holds);
    assert_eq!(b.values[0], 0.0);
    assert!((b.values[1] - 1.0).abs() < 0.25, "{:?}", b.values);
    assert!((b.values[2] - 2.0).abs() < 0.25, "{:?}", b.values);
}

#[test]
fn thousands_of_categories_fit_quickly() {
    let ds = latent(2, 200, 20..=20, 0.8, 0.7);
    let start = std::time::Instant::now();
    let fit = fit_cpm(&ds, Axis::X, LinkFunction::Probit, &opts()).unwrap();
    assert_eq!(fit.n_categories(), 4000);
    assert!(fit.converged && fit.gradient_norm <= 1e-8);
    assert!(start.elapsed().as_secs_f64() < 5.0, "{:?}", start.elapsed());
}
