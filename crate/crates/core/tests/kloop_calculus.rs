use num_complex::Complex64;
use prbm::deterministic::{khat2_propagator, m_sc_real, Charge, ShapeParams};
use prbm::kloop_calculus::*;
use prbm::VarianceProfile;
use proptest::prelude::*;

use Charge::{Minus as M, Plus as P};

fn profile(alpha: f64, w: f64, n: usize) -> VarianceProfile {
    VarianceProfile::power_law(alpha, w, n).unwrap()
}

fn m_of(s: Charge, e: f64) -> Complex64 {
    s.apply(m_sc_real(e))
}

// Independent dense inverse of (1 - a S) by Gaussian elimination.
fn dense_resolvent(p: &VarianceProfile, a: Complex64) -> Vec<Vec<Complex64>> {
    let n = p.size;
    let mut aug: Vec<Vec<Complex64>> = (0..n)
        .map(|i| {
            let mut row: Vec<Complex64> = (0..n).map(|j| if i == j { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) } - a * p.entry(i, j)).collect();
            row.extend((0..n).map(|j| Complex64::new(if i == j { 1.0 } else { 0.0 }, 0.0)));
            row
        })
        .collect();
    for c in 0..n {
        let piv = (c..n).max_by(|&x, &y| aug[x][c].norm().partial_cmp(&aug[y][c].norm()).unwrap()).unwrap();
        aug.swap(c, piv);
        let d = aug[c][c];
        for v in aug[c].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != c {
                let f = aug[r][c];
                let pivot_row = aug[c].clone();
                for (v, pv) in aug[r].iter_mut().zip(pivot_row) {
                    *v -= f * pv;
                }
            }
        }
    }
    aug.into_iter().map(|r| r[n..].to_vec()).collect()
}

#[test]
fn order_two_matches_closed_form() {
    let p = profile(2.0, 3.0, 32);
    let (e, t) = (0.4, 0.6);
    for s1 in Charge::BOTH {
        for s2 in Charge::BOTH {
            let a = m_of(s1, e) * m_of(s2, e);
            let inv = dense_resolvent(&p, t * a);
            let circ = khat2_propagator(&p, t, (s1, s2), e).unwrap();
            let mut engine = KhatEngine::new(&p, e, t).unwrap();
            let k = engine.tensor(&[s1, s2]).unwrap();
            for x in 0..p.size {
                for y in 0..p.size {
                    let want = a * inv[x][y];
                    assert!((k.get(&[x, y]) - want).norm() < 1e-10);
                    assert!((circ.entry(x, y) - want).norm() < 1e-10);
                }
            }
        }
    }
}

#[test]
fn initial_condition_is_diagonal() {
    let p = profile(1.5, 2.0, 8);
    let e = -0.3;
    let sigma = [P, M, M];
    let mut engine = KhatEngine::new(&p, e, 0.0).unwrap();
    let k = engine.tensor(&sigma).unwrap();
    let prod: Complex64 = sigma.iter().map(|&s| m_of(s, e)).product();
    for flat in 0..k.data.len() {
        let xs = k.unravel(flat);
        let want = if xs.iter().all(|&x| x == xs[0]) { prod } else { Complex64::new(0.0, 0.0) };
        assert!((k.data[flat] - want).norm() < 1e-14);
    }
    let ode = khat_ode_oracle(&p, e, 0.0, &sigma, &OdeOptions::default()).unwrap();
    assert!(ode.max_abs_diff(&k).unwrap() < 1e-14);
}

#[test]
fn recursion_matches_ode() {
    // the full N = 16 grid runs in the acceptance suite
    for (n, t, sigma) in [(8, 0.3, [P, M, P]), (8, 0.7, [P, M, P]), (8, 0.7, [P, P, M]), (16, 0.3, [M, P, P])] {
        let p = profile(2.0, 2.0, n);
        let mut engine = KhatEngine::new(&p, 0.2, t).unwrap();
        let rec = engine.tensor(&sigma).unwrap();
        let ode = khat_ode_oracle(&p, 0.2, t, &sigma, &OdeOptions::default()).unwrap();
        let d = rec.max_abs_diff(&ode).unwrap();
        assert!(d <= 1e-6, "N={n} t={t} {sigma:?}: {d:e}");
    }
}

#[test]
fn pointwise_matches_tensor() {
    let p = profile(2.5, 2.0, 12);
    let sigma = [P, M, P, M];
    let mut dense = KhatEngine::new(&p, 0.1, 0.5).unwrap();
    let k = dense.tensor(&sigma).unwrap();
    let mut point = KhatEngine::new(&p, 0.1, 0.5).unwrap();
    for xs in [[0, 0, 0, 0], [1, 3, 5, 2], [11, 0, 6, 6], [4, 9, 2, 7]] {
        assert!((point.value(&sigma, &xs).unwrap() - k.get(&xs)).norm() < 1e-12);
    }
}

#[test]
fn shift_invariance_and_symmetry() {
    let p = profile(2.0, 2.0, 10);
    let sigma = [P, M, M, P];
    let mut engine = KhatEngine::new(&p, 0.5, 0.8).unwrap();
    let k = engine.tensor(&sigma).unwrap();
    let rotated = engine.tensor(&[M, M, P, P]).unwrap();
    let n = p.size;
    for flat in (0..k.data.len()).step_by(7) {
        let xs = k.unravel(flat);
        let ys = [xs[1], xs[2], xs[3], xs[0]];
        assert!((k.get(&xs) - rotated.get(&ys)).norm() < 1e-9);
        let shifted: Vec<usize> = xs.iter().map(|x| (x + 3) % n).collect();
        assert!((k.get(&xs) - k.get(&shifted)).norm() < 1e-9);
    }

    let k3 = engine.tensor(&[P, M, P]).unwrap();
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let mut a = vec![vec![Complex64::new(0.0, 0.0); n]; n];
        for flat in 0..k3.data.len() {
            let xs = k3.unravel(flat);
            a[xs[i]][xs[j]] += k3.data[flat];
        }
        for x in 0..n {
            for y in 0..n {
                assert!((a[x][y] - a[y][x]).norm() < 1e-8);
            }
        }
        let rows: Vec<Complex64> = a.iter().map(|r| r.iter().sum()).collect();
        for r in &rows {
            assert!((r - rows[0]).norm() < 1e-8);
        }
    }
}

#[test]
fn smoothing_matches_brute_force() {
    let p = profile(1.5, 1.5, 8);
    let mut engine = KhatEngine::new(&p, -0.6, 0.4).unwrap();
    let khat = engine.tensor(&[P, M, P]).unwrap();
    let l = kloop_l(&khat, &p);
    let c = kloop_c(&khat, &p);
    let n = p.size;
    for flat in 0..l.data.len() {
        let xs = l.unravel(flat);
        let mut want_l = Complex64::new(0.0, 0.0);
        let mut want_c = Complex64::new(0.0, 0.0);
        for a in 0..n {
            for b in 0..n {
                for d in 0..n {
                    let s12 = p.entry(xs[0], a) * p.entry(xs[1], b);
                    want_l += s12 * p.entry(xs[2], d) * khat.get(&[a, b, d]);
                    if d == 0 {
                        want_c += s12 * khat.get(&[a, b, xs[2]]);
                    }
                }
            }
        }
        assert!((l.data[flat] - want_l).norm() < 1e-12);
        assert!((c.data[flat] - want_c).norm() < 1e-12);
    }
}

#[test]
fn order_two_loop_matches_propagator() {
    let p = profile(3.0, 4.0, 32);
    let t = 0.9;
    let mut engine = KhatEngine::new(&p, 0.0, t).unwrap();
    let l = kloop_l(&engine.tensor(&[M, P]).unwrap(), &p);
    // S a (1 - t a S)^{-1} S
    let a = m_of(M, 0.0) * m_of(P, 0.0);
    let inv = dense_resolvent(&p, t * a);
    for x in 0..p.size {
        let mut want = Complex64::new(0.0, 0.0);
        for u in 0..p.size {
            for v in 0..p.size {
                want += p.entry(x, u) * a * inv[u][v] * p.entry(v, 5);
            }
        }
        assert!((l.get(&[x, 5]) - want).norm() < 1e-10);
    }
}

#[test]
fn ward_identity_for_loops() {
    let p = profile(2.0, 4.0, 64);
    for t in [0.2, 0.9] {
        assert!(kloop_ward_check(&p, 0.3, t, &[M, P]).unwrap() <= 1e-9);
    }
    let p = profile(2.0, 2.0, 16);
    for sigma in [[P, M, M], [M, P, P], [P, P, M]] {
        let r = kloop_ward_check(&p, -0.5, 0.6, &sigma).unwrap();
        assert!(r <= 1e-7, "{sigma:?}: {r:e}");
    }
    assert!(kloop_ward_check(&p, 0.3, 0.5, &[P, M, P]).is_err());
    assert!(kloop_ward_check(&p, 2.5, 0.5, &[P, M]).is_err());
}

// Closed form count binom(3n-3, n-1) / (2n-1).
fn nct_count(n: u64) -> u64 {
    let (top, k) = (3 * n - 3, n - 1);
    let mut c: u64 = 1;
    for i in 0..k {
        c = c * (top - i) / (i + 1);
    }
    c / (2 * n - 1)
}

#[test]
fn tree_counts() {
    let expected = [1, 3, 12, 55, 273, 1428, 7752];
    for (n, &want) in (2..=8).zip(&expected) {
        assert_eq!(nct_count(n as u64), want);
        let trees = enumerate_noncrossing_trees(n).unwrap();
        assert_eq!(trees.len() as u64, want, "n = {n}");
        assert!(trees.iter().all(|t| t.is_valid()));
    }
    assert!(enumerate_noncrossing_trees(10).is_err());
}

#[test]
fn decay_small_orders() {
    let shape = ShapeParams::new(2.0, 4.0, 128);
    let (d, tr) = decay_factors(&shape, 0.7, &[17]).unwrap();
    assert_eq!((d, tr), (1.0, 1.0));
    let (d, tr) = decay_factors(&shape, 0.7, &[3, 40]).unwrap();
    assert!((d - tr).abs() < 1e-15);
    let ell = shape.ell_t(0.7);
    assert!((d - (37.0 / ell + 1.0).powf(-3.0)).abs() < 1e-15);
    assert!(decay_factors(&ShapeParams::new(0.5, 4.0, 128), 0.7, &[1, 2]).is_err());
    assert!(DecayFactors::new(ShapeParams::new(0.5, 4.0, 128), 0.7, DecayMode::ExperimentalSubcritical).is_ok());
}

#[test]
fn tree_bound_at_time_zero() {
    // At t = 0 only the diagonal survives: K^L_x = prod m * sum_a prod_i S_{x_i a}.
    let p = profile(2.0, 2.0, 16);
    let sigma = [P, M, P];
    let xs = vec![0, 2, 5];
    let fit = verify_tree_bound(&p, 0.0, 0.0, &sigma, Some(&[xs.clone()])).unwrap();
    let shape = ShapeParams::from_profile(&p);
    let kl: f64 = (0..16).map(|a| xs.iter().map(|&x| p.entry(x, a)).product::<f64>()).sum();
    let kc: f64 = p.entry(0, 5) * p.entry(2, 5);
    let (_, tree) = decay_factors(&shape, 0.0, &xs).unwrap();
    let want = kl.max(kc) / (shape.b_t(0.0, 0.0).unwrap().powi(2) * tree);
    assert!((fit.constant - want).abs() < 1e-12 * want);
}

#[test]
fn tree_bound_doubling_is_stable() {
    let rows = tree_bound_doubling(&profile(2.0, 2.0, 16), &profile(2.0, 2.0, 32), 0.0, 0.5, &[P, M, P]).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.constant.is_finite() && r.stable_flag));
    let mut buf = Vec::new();
    write_k_report(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "n,alpha,t,N,constant,stable_flag");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tree_decay_dominated_by_loop_decay(seed in prop::collection::vec(0usize..256, 2..=5), t in 0.0f64..0.99) {
        let shape = ShapeParams::new(2.0, 4.0, 256);
        let (d, tr) = decay_factors(&shape, t, &seed).unwrap();
        prop_assert!(tr <= 10.0 * d);
        prop_assert!(tr >= d * (1.0 - 1e-12) || seed.len() > 2);
    }

    #[test]
    fn enumerated_trees_are_noncrossing(n in 2usize..=7) {
        for tree in enumerate_noncrossing_trees(n).unwrap() {
            prop_assert_eq!(tree.edges.len(), n - 1);
            for &(i, j) in &tree.edges {
                for &(k, l) in &tree.edges {
                    prop_assert!(!(i < k && k < j && j < l));
                }
            }
        }
    }
}
