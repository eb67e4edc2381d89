use num_complex::Complex64;
use prbm::circulant::Circulant;
use prbm::deterministic::*;
use prbm::profile::power_law_normalizer;
use prbm::{periodic_distance, ProfileDensity, VarianceProfile};
use proptest::prelude::*;

use Charge::{Minus as M, Plus as P};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

// Dense inverse of a complex matrix by Gauss-Jordan elimination.
fn dense_inverse(a: Vec<Vec<Complex64>>) -> Vec<Vec<Complex64>> {
    let n = a.len();
    let mut aug: Vec<Vec<Complex64>> = a
        .into_iter()
        .enumerate()
        .map(|(i, mut row)| {
            row.extend((0..n).map(|j| c(if i == j { 1.0 } else { 0.0 }, 0.0)));
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| aug[x][col].norm().total_cmp(&aug[y][col].norm())).unwrap();
        aug.swap(col, piv);
        let d = aug[col][col];
        aug[col].iter_mut().for_each(|v| *v /= d);
        let pivot_row = aug[col].clone();
        for (r, row) in aug.iter_mut().enumerate() {
            if r != col {
                let f = row[col];
                row.iter_mut().zip(&pivot_row).for_each(|(v, p)| *v -= f * p);
            }
        }
    }
    aug.into_iter().map(|r| r[n..].to_vec()).collect()
}

// Dense a S (1 - xi S)^(-1).
fn dense_propagator(p: &VarianceProfile, a: Complex64, xi: Complex64) -> Vec<Vec<Complex64>> {
    let n = p.size;
    let m: Vec<Vec<Complex64>> = (0..n)
        .map(|i| (0..n).map(|j| c(if i == j { 1.0 } else { 0.0 }, 0.0) - xi * p.entry(i, j)).collect())
        .collect();
    let inv = dense_inverse(m);
    (0..n).map(|x| (0..n).map(|y| a * (0..n).map(|k| p.entry(x, k) * inv[k][y]).sum::<Complex64>()).collect()).collect()
}

#[test]
fn periodic_distance_examples() {
    assert_eq!(periodic_distance(0, 0, 10), 0);
    assert_eq!(periodic_distance(1, 9, 10), 2);
    assert_eq!(periodic_distance(3, 8, 10), 5);
}

#[test]
fn small_power_law_kernel() {
    // distances 0, 1, 2, 1 with weights (d + 1)^(-3)
    let p = VarianceProfile::power_law(2.0, 1.0, 4).unwrap();
    let z = 1.0 + 2.0 / 8.0 + 1.0 / 27.0;
    let want = [1.0 / z, 1.0 / (8.0 * z), 1.0 / (27.0 * z), 1.0 / (8.0 * z)];
    for (k, w) in p.kernel.iter().zip(want) {
        assert!((k - w).abs() < 1e-15);
    }
    assert!((power_law_normalizer(2.0, 1.0, 4) - z).abs() < 1e-15);
}

#[test]
fn normalizer_growth() {
    // Z / W stays bounded at alpha = 1 and grows like log(N / W) at alpha = 0
    let w = 4.0;
    let ratio = |alpha: f64, n: usize| power_law_normalizer(alpha, w, n) / w;
    let bounded: Vec<f64> = [256, 1024, 4096, 16384].iter().map(|&n| ratio(1.0, n)).collect();
    assert!(bounded.windows(2).all(|p| p[1] - p[0] < 0.1));
    assert!(bounded[3] < 2.5);
    let growing: Vec<f64> = [256, 1024, 4096, 16384].iter().map(|&n| ratio(0.0, n)).collect();
    for pair in growing.windows(2) {
        // each factor 4 in N adds 2 ln 4 (both sides of the circle)
        assert!((pair[1] - pair[0] - 2.0 * 4f64.ln()).abs() < 0.05, "{growing:?}");
    }
}

#[test]
fn four_point_dft() {
    let p = VarianceProfile::from_kernel(2.0, 1.0, vec![0.5, 0.25, 0.0, 0.25]).unwrap();
    let psi = p.eigenvalues();
    for (v, w) in psi.iter().zip([1.0, 0.5, 0.0, 0.5]) {
        assert!((v - w).abs() < 1e-15);
    }
}

#[test]
fn spectral_gap_positive() {
    let p = VarianceProfile::power_law(2.0, 16.0, 512).unwrap();
    assert!(p.spectral_gap_constant() > 0.1);
}

#[test]
fn profile_function_shapes() {
    let cauchy = VarianceProfile::profile_function(ProfileDensity::Cauchy, 4.0, 64).unwrap();
    assert!(cauchy.kernel[..=32].windows(2).all(|w| w[0] > w[1]));
    for nu in [1.5, 3.0, 7.0] {
        let p = VarianceProfile::profile_function(ProfileDensity::StudentT { nu }, 8.0, 128).unwrap();
        assert!((p.kernel.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(p.alpha, nu);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn power_law_invariants(alpha in -0.9f64..5.0, w in 1.0f64..12.0, n in 24usize..200) {
        let p = VarianceProfile::power_law(alpha, w, n).unwrap();
        prop_assert!((p.kernel.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let z = power_law_normalizer(alpha, w, n);
        for d in 0..n {
            prop_assert!(p.kernel[d] >= 0.0);
            prop_assert!((p.kernel[d] - p.kernel[(n - d) % n]).abs() == 0.0);
            let r = periodic_distance(0, d, n) as f64;
            prop_assert!((p.kernel[d] * z * (r / w + 1.0).powf(1.0 + alpha) - 1.0).abs() < 1e-12);
        }
        let psi = p.eigenvalues();
        prop_assert!((psi[0] - 1.0).abs() < 1e-12);
        prop_assert!(psi.iter().all(|v| v.abs() <= 1.0 + 1e-12));
        if alpha >= 0.0 {
            prop_assert!(psi[1..].iter().all(|&v| 1.0 - v > 0.0));
        }
        let back = Circulant::from_symbol(&psi.iter().map(|&v| c(v, 0.0)).collect::<Vec<_>>());
        for d in 0..n {
            prop_assert!((back.row[d] - p.kernel[d]).norm() < 1e-12);
        }
    }

    #[test]
    fn student_profiles_are_stochastic(nu in 1.0f64..6.0, w in 1.0f64..8.0, n in 32usize..160) {
        let p = VarianceProfile::profile_function(ProfileDensity::StudentT { nu }, w, n).unwrap();
        prop_assert!((p.kernel.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for d in 1..n {
            prop_assert!(p.kernel[d] >= 0.0);
            prop_assert!((p.kernel[d] - p.kernel[n - d]).abs() < 1e-15);
        }
    }

    #[test]
    fn m_sc_self_consistent(e in -3.0f64..3.0, eta in 1e-4f64..3.0) {
        let z = c(e, eta);
        let m = m_sc(z);
        prop_assert!(m.im > 0.0);
        prop_assert!((m + 1.0 / (m + z)).norm() < 1e-12);
    }

    #[test]
    fn shape_monotone(alpha in -0.9f64..4.0, eta in 1e-3f64..1.0, r1 in 0.0f64..256.0, dr in 0.0f64..256.0) {
        let s = ShapeParams::new(alpha, 8.0, 512);
        prop_assert!(s.b(eta, r1).unwrap() > 0.0);
        prop_assert!(s.b(eta, r1).unwrap() >= s.b(eta, r1 + dr).unwrap() * (1.0 - 1e-12));
        prop_assert!(s.ell(eta) <= 512.0);
        prop_assert!(s.ell(eta) >= s.ell((eta * 1.5).min(1.0)));
    }
}

#[test]
fn m_sc_examples() {
    assert!((m_sc(c(0.0, 0.0)) - c(0.0, 1.0)).norm() < 1e-15);
    assert!((m_sc(c(0.0, 1.0)) - c(0.0, (5f64.sqrt() - 1.0) / 2.0)).norm() < 1e-14);
    for k in 0..100 {
        let e = -1.98 + 3.96 * k as f64 / 99.0;
        let m = m_sc_real(e);
        assert!((m.norm() - 1.0).abs() < 1e-12);
        assert!((m + 1.0 / (m + e)).norm() < 1e-12);
    }
}

#[test]
fn m_t_examples() {
    let z = c(0.3, 0.4);
    assert!((m_t(z, 0.0).unwrap() + 1.0 / z).norm() < 1e-13);
    assert!((m_t(z, 1.0).unwrap() - m_sc(z)).norm() < 1e-12);
    for k in 1..10 {
        let t = k as f64 / 10.0;
        let zt = c(0.5, 0.0) + (1.0 - t) * m_sc_real(0.5);
        assert!((m_t(zt, t).unwrap() - m_sc_real(0.5)).norm() < 1e-10);
    }
}

#[test]
fn shape_examples() {
    let s = ShapeParams::new(2.0, 8.0, 4096);
    for eta in [1.0f64, 0.1, 0.01] {
        let ell = (8.0 * eta.powf(-0.5)).min(4096.0);
        assert!((s.b(eta, 0.0).unwrap() - 1.0 / (eta * ell)).abs() < 1e-15);
    }
    assert!(s.b_ring(0.5, 0.0).is_ok());
    let neg = ShapeParams::new(-0.5, 8.0, 256);
    assert!(neg.b_ring(0.5, 3.0).is_err());
    assert!(neg.r(0.5, 3.0).is_err());
}

#[test]
fn critical_scale_examples() {
    let cs = ShapeParams::new(3.0, 32.0, 1_000_000).critical_scales();
    assert!((cs.eta_star - (1.0 / 1024.0 + 1e-6)).abs() < 1e-15);
    assert!((cs.w_c - 1000.0).abs() < 1e-9);
    let cs = ShapeParams::new(0.5, 8.0, 300).critical_scales();
    assert_eq!((cs.eta_star, cs.w_c), (1.0 / 300.0, 1.0));
    assert!((ShapeParams::new(1.5, 4.0, 4096).critical_scales().w_c - 16.0).abs() < 1e-9);
}

#[test]
fn theta_matches_dense_solve() {
    let toy = VarianceProfile::from_kernel(2.0, 1.0, vec![0.5, 0.25, 0.0, 0.25]).unwrap();
    let p = VarianceProfile::power_law(1.5, 3.0, 40).unwrap();
    for (prof, e, t) in [(&toy, 0.0, 0.5), (&p, 0.7, 0.9), (&p, -1.2, 0.4)] {
        for s in [(P, M), (P, P), (M, M)] {
            let a = charge_product(e, s);
            let theta = theta_propagator(prof, t, s, e).unwrap();
            let dense = dense_propagator(prof, a, t * a);
            let k = k_loop_propagator(prof, t, s, e).unwrap();
            for x in 0..prof.size {
                for y in 0..prof.size {
                    assert!((theta.entry(x, y) - dense[x][y]).norm() < 1e-10);
                    let s_theta: Complex64 = (0..prof.size).map(|j| prof.entry(x, j) * theta.entry(j, y)).sum();
                    assert!((k.entry(x, y) - s_theta).norm() < 1e-10);
                }
            }
        }
    }
}

#[test]
fn theta_basic_identities() {
    let p = VarianceProfile::power_law(2.0, 4.0, 64).unwrap();
    let theta0 = theta_propagator(&p, 0.0, (P, P), 0.4).unwrap();
    let a = charge_product(0.4, (P, P));
    for d in 0..64 {
        assert!((theta0.row[d] - a * p.kernel[d]).norm() < 1e-14);
    }
    for t in [0.1, 0.5, 0.99] {
        let th = theta_propagator(&p, t, (M, P), 0.4).unwrap();
        assert!((th.row_sum() - 1.0 / (1.0 - t)).norm() < 1e-10 * (1.0 / (1.0 - t)));
    }
    assert!(matches!(theta_propagator(&p, 1.0, (P, M), 0.4), Err(prbm::PrbmError::NearSingular { .. })));
}

#[test]
fn evolution_kernel_identities() {
    let p = VarianceProfile::power_law(2.0, 4.0, 64).unwrap();
    let (e, s_pair) = (0.3, (P, M));
    let a = charge_product(e, s_pair);
    let id = evolution_kernel(&p, 0.6, 0.6, s_pair, e).unwrap();
    assert!((id.row[0] - 1.0).norm() < 1e-15 && id.row[1..].iter().all(|v| v.norm() == 0.0));
    let (s, u, t) = (0.2, 0.5, 0.8);
    let ust = evolution_kernel(&p, s, t, s_pair, e).unwrap();
    // product form (1 - s a S)(1 - t a S)^(-1)
    let prod: Vec<Complex64> = p.eigenvalues().iter().map(|&v| (1.0 - s * a * v) / (1.0 - t * a * v)).collect();
    let prod = Circulant::from_symbol(&prod);
    let composed = evolution_kernel(&p, s, u, s_pair, e).unwrap().mul(&evolution_kernel(&p, u, t, s_pair, e).unwrap());
    for d in 0..64 {
        assert!((ust.row[d] - prod.row[d]).norm() < 1e-10);
        assert!((ust.row[d] - composed.row[d]).norm() < 1e-9);
    }
    assert!(evolution_kernel(&p, 0.7, 0.2, s_pair, e).is_err());
}

#[test]
fn certification_dense_oracle() {
    let toy = VarianceProfile::from_kernel(2.0, 1.0, vec![0.5, 0.25, 0.0, 0.25]).unwrap();
    let shape = ShapeParams::from_profile(&toy);
    let ts = [0.0, 0.5, 0.75];
    let xis = default_xi_grid(0.1, 5);
    let fits = certify_assumption_bounds(&toy, &ts, &xis, &CertifyOptions::default()).unwrap();
    let one = c(1.0, 0.0);
    for &t in &ts {
        let dense = dense_propagator(&toy, one, c(t, 0.0));
        let want = (0..4)
            .map(|y| dense[0][y].norm() / shape.b_t(t, periodic_distance(0, y, 4) as f64).unwrap())
            .fold(0.0, f64::max);
        let got = fits.iter().find(|f| f.bound_id == BoundId::Propagator && f.t == t).unwrap().fitted_c;
        assert!((got - want).abs() < 1e-10 * want);
        let mut want_c: f64 = 0.0;
        for &xi in &xis {
            let dense = dense_propagator(&toy, one, xi * t);
            for y in 0..4 {
                want_c = want_c.max(dense[0][y].norm() / shape.b_t(0.0, periodic_distance(0, y, 4) as f64).unwrap());
            }
        }
        let got_c = fits.iter().find(|f| f.bound_id == BoundId::ComplexPropagator && f.t == t).unwrap().fitted_c;
        assert!((got_c - want_c).abs() < 1e-10 * want_c);
    }
    // at t = 0 both families see S itself
    let at0 = |id| fits.iter().find(|f| f.bound_id == id && f.t == 0.0).unwrap().fitted_c;
    assert!((at0(BoundId::Propagator) - at0(BoundId::ComplexPropagator)).abs() < 1e-12);
}

#[test]
fn certification_csv_columns() {
    let small = VarianceProfile::power_law(3.0, 4.0, 32).unwrap();
    let large = VarianceProfile::power_law(3.0, 4.0, 64).unwrap();
    let rep = certify_doubling(&small, &large, &CertifyOptions::default()).unwrap();
    let mut buf = Vec::new();
    rep.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "bound_id,t,fitted_C,N,stable_flag");
    assert!(rep.max_constant(BoundId::Propagator, 64).unwrap().is_finite());
    assert!(certify_doubling(&small, &small, &CertifyOptions::default()).is_err());
}
