use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};
use tcfou_core::fou_stats::{moments_monte_carlo, moments_subordinated, variance_v2};
use tcfou_core::simulate::*;
use tcfou_core::{BernsteinSpec, QuadratureConfig};

fn half_gaussian_survival(x: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).unwrap();
    2.0 * (1.0 - n.cdf(x / 2f64.sqrt()))
}

#[test]
fn fbm_moments() {
    let grid = uniform_grid(1.0, 16).unwrap();
    let ens = sample_fbm(0.75, &grid, 100_000, 11).unwrap();
    assert!(!ens.cholesky_fallback);
    for j in 1..grid.len() {
        let (m, se) = mean_se(&ens.column(j));
        assert!(m.abs() < 4.0 * se, "mean at {} is {m} (se {se})", grid[j]);
    }
    let b1 = ens.column(16);
    let b05 = ens.column(8);
    let sq: Vec<f64> = b1.iter().map(|b| b * b).collect();
    let (v, se) = mean_se(&sq);
    assert!((v - 1.0).abs() < 3.0 * se, "var {v} se {se}");
    let prod: Vec<f64> = b1.iter().zip(&b05).map(|(a, b)| a * b).collect();
    let (c, se) = mean_se(&prod);
    assert!((c - 0.5).abs() < 3.0 * se, "cov {c} se {se}");
}

#[test]
fn cholesky_generator_samples_fbm() {
    let g = FbmGenerator::cholesky(0.75, 8, 0.125).unwrap();
    let mut out = vec![0.0; 9];
    let mut sq = Vec::new();
    for i in 0..40_000 {
        let mut rng = path_rng(3, 1, i);
        g.sample(&mut rng, &mut out);
        sq.push(out[8] * out[8]);
    }
    let (v, se) = mean_se(&sq);
    assert!((v - 1.0).abs() < 3.0 * se);
}

#[test]
fn fou_starts_at_zero_and_matches_variance() {
    let grid = uniform_grid(1.0, 1024).unwrap();
    let ens = sample_fou(0.75, 1.0, &grid, 20_000, 5).unwrap();
    assert!((0..ens.n_paths).all(|i| ens.path(i)[0] == 0.0));
    let u1 = ens.column(1024);
    let (m2, se) = moments_monte_carlo(1, &u1);
    let v = variance_v2(0.75, 1.0, 1.0).unwrap();
    // trapezoid bias is O(dt) on a variance of order one
    assert!((m2 - v).abs() < 3.0 * se + 1.0 / 1024.0, "{m2} vs {v} (se {se})");
    // Gaussian fourth moment 3 V^2
    let (m4, se4) = moments_monte_carlo(2, &u1);
    assert!((m4 - 3.0 * v * v).abs() < 3.0 * se4 + 3.0 / 1024.0, "{m4} vs {}", 3.0 * v * v);
}

#[test]
fn fou_with_huge_theta_is_fbm() {
    let grid = uniform_grid(1.0, 256).unwrap();
    let b = sample_fbm(0.75, &grid, 200, 9).unwrap();
    let u = sample_fou(0.75, 1e6, &grid, 200, 9).unwrap();
    for i in 0..200 {
        let d = b.path(i).iter().zip(u.path(i)).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(d < 1e-5, "path {i}: {d}");
    }
}

#[test]
fn stable_variates_have_the_right_laplace_transform() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for alpha in [0.3, 0.5, 0.8] {
        let xs: Vec<f64> = (0..50_000).map(|_| sample_stable(alpha, &mut rng)).collect();
        for lambda in [0.5, 1.0, 2.0] {
            let e: Vec<f64> = xs.iter().map(|x| (-lambda * x).exp()).collect();
            let (m, se) = mean_se(&e);
            let exact = (-f64::powf(lambda, alpha)).exp();
            assert!((m - exact).abs() < 4.0 * se, "alpha {alpha} lambda {lambda}: {m} vs {exact}");
        }
    }
}

#[test]
fn inverse_stable_half_mean_and_tail() {
    let spec = BernsteinSpec::stable(0.5).unwrap();
    let grid = [0.0, 0.25, 0.5, 1.0];
    let y_step = 1e-3;
    let ens = sample_inverse_subordinator(&spec, &grid, 20_000, 21, y_step).unwrap();
    for i in 0..ens.n_paths {
        let p = ens.path(i);
        assert_eq!(p[0], 0.0);
        assert!(p.windows(2).all(|w| w[1] >= w[0]));
    }
    assert_eq!(ens.y_step, Some(y_step));
    let e1 = ens.column(3);
    let (m, se) = mean_se(&e1);
    assert!((m - std::f64::consts::FRAC_2_SQRT_PI).abs() < 3.0 * se + y_step, "{m} se {se}");
    let n = e1.len() as f64;
    for x in [0.5, 1.0, 2.0] {
        let p = half_gaussian_survival(x);
        let hat = e1.iter().filter(|&&e| e > x).count() as f64 / n;
        let se = (p * (1.0 - p) / n).sqrt();
        // lattice bias can only push values up by at most y_step
        let slack = half_gaussian_survival(x - y_step) - p;
        assert!((hat - p).abs() < 3.0 * se + slack, "x={x}: {hat} vs {p}");
    }
}

#[test]
fn inverse_stable_half_ks() {
    let spec = BernsteinSpec::stable(0.5).unwrap();
    let ens = sample_inverse_subordinator(&spec, &[0.0, 1.0], 10_000, 33, 1e-3).unwrap();
    let mut e = ens.column(1);
    e.sort_by(f64::total_cmp);
    let n = e.len() as f64;
    let mut d: f64 = 0.0;
    for (k, &x) in e.iter().enumerate() {
        let f = 1.0 - half_gaussian_survival(x);
        d = d.max((f - k as f64 / n).abs()).max(((k + 1) as f64 / n - f).abs());
    }
    assert!(d < 1.628 / n.sqrt(), "KS statistic {d}");
}

#[test]
fn tempered_subordinator_laplace() {
    // P(E(t) > y) = P(sigma(y) <= t); check E e^{-lambda sigma(y)} through increments
    let spec = BernsteinSpec::tempered(0.6, 1.5).unwrap();
    let ens = sample_inverse_subordinator(&spec, &[0.0, 0.5, 1.0], 20_000, 8, 1e-3).unwrap();
    for i in 0..ens.n_paths {
        assert!(ens.path(i).windows(2).all(|w| w[1] >= w[0]));
    }
    // tempering slows the clock: E(1) stochastically larger than the stable one
    let st = sample_inverse_subordinator(&BernsteinSpec::stable(0.6).unwrap(), &[0.0, 1.0], 20_000, 8, 1e-3).unwrap();
    let (mt, _) = mean_se(&ens.column(2));
    let (ms, _) = mean_se(&st.column(1));
    assert!(mt > ms);
    // E[E(t)] has Laplace transform 1 / (lambda Phi(lambda))
    let lambda = 1.0;
    let grid = uniform_grid(30.0, 600).unwrap();
    let ens = sample_inverse_subordinator(&spec, &grid, 4_000, 12, 1e-2).unwrap();
    let dt = grid[1];
    let mean_path: Vec<f64> = (0..grid.len()).map(|j| mean_se(&ens.column(j)).0).collect();
    let mut lt = 0.0;
    for j in 1..grid.len() {
        let (a, b) = (mean_path[j - 1], mean_path[j]);
        lt += 0.5 * dt * (a * (-lambda * grid[j - 1]).exp() + b * (-lambda * grid[j]).exp());
    }
    let exact = 1.0 / (lambda * spec.phi(lambda).unwrap());
    assert!((lt - exact).abs() / exact < 0.03, "{lt} vs {exact}");
}

#[test]
fn tcfou_structure_and_second_moment() {
    let spec = BernsteinSpec::stable(0.5).unwrap();
    let grid: Vec<f64> = (0..=20).map(|k| k as f64 * 0.05).collect();
    let opts = TcfouOptions { y_step: 1e-3, aux_step: 5e-3 };
    let ens = sample_tcfou(0.75, 1.0, &spec, &grid, 20_000, 44, opts).unwrap();
    let inner = sample_inverse_subordinator(&spec, &grid, 20_000, 44, opts.y_step).unwrap();
    let mut plateaus = 0;
    for i in 0..ens.n_paths {
        let (u, e) = (ens.path(i), inner.path(i));
        assert_eq!(u[0], 0.0);
        for j in 1..grid.len() {
            if e[j] == e[j - 1] {
                plateaus += 1;
                assert_eq!(u[j], u[j - 1]);
            }
        }
    }
    assert!(plateaus > 0);
    let (m2, se) = moments_monte_carlo(1, &ens.column(20));
    let exact = moments_subordinated(1, 0.75, 1.0, &spec, 1.0, &QuadratureConfig::default()).unwrap();
    // V' <= 1.5 t^{1/2} bounds the lattice bias; interpolation loses O(aux_step^{2H})
    let bias = 2.0 * opts.y_step + f64::powf(opts.aux_step, 1.5);
    assert!((m2 - exact).abs() < 3.0 * se + bias, "{m2} vs {exact} (se {se})");
}

#[test]
fn clock_and_driver_are_independent() {
    let spec = BernsteinSpec::stable(0.5).unwrap();
    let n = 100_000;
    let e = sample_inverse_subordinator(&spec, &[0.0, 1.0], n, 99, 1e-2).unwrap().column(1);
    let b = sample_fbm(0.75, &uniform_grid(1.0, 4).unwrap(), n, 99).unwrap().column(4);
    let (me, _) = mean_se(&e);
    let (mb, _) = mean_se(&b);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in e.iter().zip(&b) {
        sxy += (x - me) * (y - mb);
        sxx += (x - me) * (x - me);
        syy += (y - mb) * (y - mb);
    }
    let r = sxy / (sxx * syy).sqrt();
    assert!(r.abs() < 4.0 / (n as f64).sqrt(), "correlation {r}");
}

#[test]
fn ensembles_are_bit_identical_across_thread_counts() {
    let spec = BernsteinSpec::tempered(0.5, 0.5).unwrap();
    let grid = uniform_grid(2.0, 8).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| sample_tcfou(0.7, 1.0, &spec, &grid, 500, 123, TcfouOptions::default()).unwrap())
    };
    let a = run(1);
    let b = run(3);
    assert_eq!(a, b);
    let mut ca = Vec::new();
    let mut cb = Vec::new();
    a.write_csv(&mut ca).unwrap();
    b.write_csv(&mut cb).unwrap();
    assert_eq!(ca, cb);
    let c = sample_tcfou(0.7, 1.0, &spec, &grid, 500, 124, TcfouOptions::default()).unwrap();
    assert_ne!(a.paths, c.paths);
}

#[test]
fn csv_layout() {
    let ens = sample_fbm(0.6, &uniform_grid(1.0, 2).unwrap(), 2, 1).unwrap();
    let mut buf = Vec::new();
    ens.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "path_id,t,value");
    assert_eq!(lines.len(), 7);
    assert!(lines[1].starts_with("0,0,0"));
    let back: PathEnsemble = serde_json::from_slice(&{
        let mut j = Vec::new();
        ens.write_json(&mut j).unwrap();
        j
    })
    .unwrap();
    assert_eq!(back, ens);
}
