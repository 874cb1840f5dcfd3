//! Monte Carlo paths of fBm, fOU, the inverse subordinator and the
//! time-changed fOU process.
//!
//! Path i draws from ChaCha8 stream i of a key derived from the seed, so
//! every row is reproducible on its own and ensembles are bit-identical
//! regardless of the thread count.

use crate::bernstein::BernsteinSpec;
use crate::error::{contract, domain, Result};
use nalgebra::DMatrix;
use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProcessTag {
    Fbm,
    Fou,
    InverseSubordinator,
    TimeChangedFou,
}

/// Row-major ensemble: `paths[i * n_times + j]` is path i at `time_grid[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub time_grid: Vec<f64>,
    pub paths: Vec<f64>,
    pub n_paths: usize,
    pub seed: u64,
    pub process: ProcessTag,
    /// Lattice step of the inverse subordinator; bounds its upward bias.
    pub y_step: Option<f64>,
    /// Step of the auxiliary fOU grid used for time-changed paths.
    pub aux_step: Option<f64>,
    /// Set when circulant embedding failed and Cholesky factors were used.
    pub cholesky_fallback: bool,
}

impl PathEnsemble {
    pub fn n_times(&self) -> usize {
        self.time_grid.len()
    }

    pub fn path(&self, i: usize) -> &[f64] {
        let n = self.n_times();
        &self.paths[i * n..(i + 1) * n]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        let n = self.n_times();
        (0..self.n_paths).map(|i| self.paths[i * n + j]).collect()
    }

    /// `path_id,t,value` rows with shortest round-trip float formatting.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "path_id,t,value")?;
        for i in 0..self.n_paths {
            for (j, t) in self.time_grid.iter().enumerate() {
                writeln!(w, "{i},{t},{}", self.paths[i * self.n_times() + j])?;
            }
        }
        Ok(())
    }

    pub fn write_json<W: std::io::Write>(&self, w: W) -> std::io::Result<()> {
        serde_json::to_writer(w, self).map_err(std::io::Error::other)
    }

    /// Index of the grid time closest to t.
    pub fn time_index(&self, t: f64) -> usize {
        let mut best = 0;
        for (j, &g) in self.time_grid.iter().enumerate() {
            if (g - t).abs() < (self.time_grid[best] - t).abs() {
                best = j;
            }
        }
        best
    }
}

/// t_k = k t_max / n_steps, k = 0..=n_steps.
pub fn uniform_grid(t_max: f64, n_steps: usize) -> Result<Vec<f64>> {
    if !(t_max > 0.0) || n_steps == 0 {
        return domain("uniform grids need t_max > 0 and n_steps >= 1");
    }
    Ok((0..=n_steps).map(|k| t_max * k as f64 / n_steps as f64).collect())
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 || grid[0] != 0.0 {
        return contract("time grids start at 0 and have at least two points");
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return contract("time grid must be strictly increasing");
    }
    Ok(())
}

fn grid_step(grid: &[f64]) -> Result<f64> {
    check_grid(grid)?;
    let dt = grid[grid.len() - 1] / (grid.len() - 1) as f64;
    if grid.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt) {
        return contract("the spectral fBm generator needs a uniform grid");
    }
    Ok(dt)
}

fn check_hurst(h: f64) -> Result<()> {
    if !(h > 0.5 && h < 1.0) {
        return domain(format!("Hurst index must lie in (1/2, 1), got {h}"));
    }
    Ok(())
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream `role` (0: subordinator, 1: Gaussian driver) for path i.
pub fn path_rng(seed: u64, role: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(role.wrapping_add(1))));
    rng.set_stream(path as u64);
    rng
}

/// Autocovariance of fractional Gaussian noise with step dt.
fn fgn_autocov(h: f64, dt: f64, k: usize) -> f64 {
    let k = k as f64;
    let e = 2.0 * h;
    0.5 * dt.powf(e) * ((k + 1.0).powf(e) - 2.0 * k.powf(e) + (k - 1.0).abs().powf(e))
}

enum Factor {
    Circulant { sqrt_eig: Vec<f64>, fft: Arc<dyn Fft<f64>> },
    Cholesky(DMatrix<f64>),
}

/// Sampler of fBm at k dt, k = 0..=n.
pub struct FbmGenerator {
    n: usize,
    factor: Factor,
}

impl std::fmt::Debug for FbmGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FbmGenerator").field("n", &self.n).field("cholesky", &self.is_cholesky()).finish()
    }
}

impl FbmGenerator {
    /// Circulant embedding; falls back to Cholesky on negative eigenvalues.
    pub fn new(hurst: f64, n: usize, dt: f64) -> Result<Self> {
        check_hurst(hurst)?;
        let m = 2 * n;
        let mut c: Vec<Complex<f64>> = (0..m)
            .map(|k| {
                let lag = if k <= n { k } else { m - k };
                Complex::new(fgn_autocov(hurst, dt, lag), 0.0)
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(m);
        fft.process(&mut c);
        let top = c.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
        if c.iter().any(|z| z.re < -1e-12 * top) {
            return Self::cholesky(hurst, n, dt);
        }
        let sqrt_eig = c.iter().map(|z| (z.re.max(0.0) / m as f64).sqrt()).collect();
        Ok(FbmGenerator { n, factor: Factor::Circulant { sqrt_eig, fft } })
    }

    /// Exact Cholesky factor of the increment covariance.
    pub fn cholesky(hurst: f64, n: usize, dt: f64) -> Result<Self> {
        check_hurst(hurst)?;
        let cov = DMatrix::from_fn(n, n, |i, j| fgn_autocov(hurst, dt, i.abs_diff(j)));
        let chol = nalgebra::Cholesky::new(cov).ok_or_else(|| crate::Error::Numeric {
            msg: "fGn covariance is not positive definite".into(),
            estimate: f64::NAN,
        })?;
        Ok(FbmGenerator { n, factor: Factor::Cholesky(chol.l()) })
    }

    pub fn is_cholesky(&self) -> bool {
        matches!(self.factor, Factor::Cholesky(_))
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Writes B(0) = 0, B(dt), ..., B(n dt) into `out` (length n + 1).
    pub fn sample(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let n = self.n;
        let mut incr = vec![0.0; n];
        match &self.factor {
            Factor::Circulant { sqrt_eig, fft } => {
                let m = 2 * n;
                let mut w = vec![Complex::new(0.0, 0.0); m];
                w[0] = Complex::new(sqrt_eig[0] * rng.sample::<f64, _>(StandardNormal), 0.0);
                w[n] = Complex::new(sqrt_eig[n] * rng.sample::<f64, _>(StandardNormal), 0.0);
                let r = std::f64::consts::FRAC_1_SQRT_2;
                for j in 1..n {
                    let a: f64 = rng.sample(StandardNormal);
                    let b: f64 = rng.sample(StandardNormal);
                    w[j] = Complex::new(sqrt_eig[j] * a * r, sqrt_eig[j] * b * r);
                    w[m - j] = w[j].conj();
                }
                fft.process(&mut w);
                for k in 0..n {
                    incr[k] = w[k].re;
                }
            }
            Factor::Cholesky(l) => {
                let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                for i in 0..n {
                    incr[i] = (0..=i).map(|j| l[(i, j)] * z[j]).sum();
                }
            }
        }
        out[0] = 0.0;
        for k in 0..n {
            out[k + 1] = out[k] + incr[k];
        }
    }
}

/// In-place map from B on a uniform grid to U_H via
/// U(t) = B(t) - (1/theta) int_0^t e^{-(t-s)/theta} B(s) ds (trapezoid rule).
pub fn fbm_to_fou(path: &mut [f64], dt: f64, theta: f64) {
    let decay = (-dt / theta).exp();
    let mut integral = 0.0;
    let mut prev_b = path[0];
    path[0] = 0.0;
    for k in 1..path.len() {
        let b = path[k];
        integral = decay * integral + 0.5 * dt * (decay * prev_b + b);
        path[k] = b - integral / theta;
        prev_b = b;
    }
}

fn gaussian_ensemble(hurst: f64, theta: Option<f64>, grid: &[f64], n_paths: usize, seed: u64) -> Result<PathEnsemble> {
    let dt = grid_step(grid)?;
    if let Some(th) = theta {
        if !(th > 0.0) {
            return domain(format!("theta must be positive, got {th}"));
        }
    }
    let n = grid.len() - 1;
    let generator = FbmGenerator::new(hurst, n, dt)?;
    let mut paths = vec![0.0; n_paths * (n + 1)];
    paths.par_chunks_mut(n + 1).enumerate().for_each(|(i, row)| {
        let mut rng = path_rng(seed, 1, i);
        generator.sample(&mut rng, row);
        if let Some(th) = theta {
            fbm_to_fou(row, dt, th);
        }
    });
    Ok(PathEnsemble {
        time_grid: grid.to_vec(),
        paths,
        n_paths,
        seed,
        process: if theta.is_some() { ProcessTag::Fou } else { ProcessTag::Fbm },
        y_step: None,
        aux_step: None,
        cholesky_fallback: generator.is_cholesky(),
    })
}

pub fn sample_fbm(hurst: f64, grid: &[f64], n_paths: usize, seed: u64) -> Result<PathEnsemble> {
    gaussian_ensemble(hurst, None, grid, n_paths, seed)
}

pub fn sample_fou(hurst: f64, theta: f64, grid: &[f64], n_paths: usize, seed: u64) -> Result<PathEnsemble> {
    gaussian_ensemble(hurst, Some(theta), grid, n_paths, seed)
}

/// Standard one-sided stable variate with E e^{-lambda S} = e^{-lambda^alpha},
/// S = (K(U) / W)^{(1-alpha)/alpha}, U ~ Unif(0, pi), W ~ Exp(1).
pub fn sample_stable(alpha: f64, rng: &mut ChaCha8Rng) -> f64 {
    let u = loop {
        let u = PI * rng.random::<f64>();
        if u > 0.0 {
            break u;
        }
    };
    let w: f64 = rng.sample(Exp1);
    let p = alpha / (1.0 - alpha);
    let ln_k = p * (alpha * u).sin().ln() + ((1.0 - alpha) * u).sin().ln() - u.sin().ln() / (1.0 - alpha);
    ((ln_k - w.ln()) / p).exp()
}

/// Subordinator increment over a lattice step dy.
fn sample_increment(spec: &BernsteinSpec, dy: f64, rng: &mut ChaCha8Rng) -> f64 {
    let a = spec.alpha();
    let scale = dy.powf(1.0 / a);
    let mu = spec.mu();
    loop {
        let x = scale * sample_stable(a, rng);
        if mu == 0.0 || rng.random::<f64>() < (-mu * x).exp() {
            return x;
        }
    }
}

/// E(t_j) as the first lattice level whose subordinator value exceeds t_j.
fn inverse_path(spec: &BernsteinSpec, grid: &[f64], y_step: f64, rng: &mut ChaCha8Rng, out: &mut [f64]) {
    let mut sigma = 0.0;
    let mut k: u64 = 0;
    for (j, &t) in grid.iter().enumerate() {
        if t == 0.0 {
            out[j] = 0.0;
            continue;
        }
        while sigma <= t {
            sigma += sample_increment(spec, y_step, rng);
            k += 1;
        }
        out[j] = k as f64 * y_step;
    }
}

pub fn sample_inverse_subordinator(
    spec: &BernsteinSpec,
    grid: &[f64],
    n_paths: usize,
    seed: u64,
    y_step: f64,
) -> Result<PathEnsemble> {
    check_grid(grid)?;
    if !(y_step > 0.0) {
        return domain(format!("y_step must be positive, got {y_step}"));
    }
    let n = grid.len();
    let mut paths = vec![0.0; n_paths * n];
    paths.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let mut rng = path_rng(seed, 0, i);
        inverse_path(spec, grid, y_step, &mut rng, row);
    });
    Ok(PathEnsemble {
        time_grid: grid.to_vec(),
        paths,
        n_paths,
        seed,
        process: ProcessTag::InverseSubordinator,
        y_step: Some(y_step),
        aux_step: None,
        cholesky_fallback: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TcfouOptions {
    pub y_step: f64,
    pub aux_step: f64,
}

impl Default for TcfouOptions {
    fn default() -> Self {
        TcfouOptions { y_step: 1e-3, aux_step: 5e-3 }
    }
}

pub fn sample_tcfou(
    hurst: f64,
    theta: f64,
    spec: &BernsteinSpec,
    grid: &[f64],
    n_paths: usize,
    seed: u64,
    opts: TcfouOptions,
) -> Result<PathEnsemble> {
    check_grid(grid)?;
    check_hurst(hurst)?;
    if !(theta > 0.0) || !(opts.y_step > 0.0) || !(opts.aux_step > 0.0) {
        return domain("theta, y_step and aux_step must be positive");
    }
    let n = grid.len();
    let generators: Mutex<HashMap<usize, Arc<FbmGenerator>>> = Mutex::new(HashMap::new());
    let fallback = std::sync::atomic::AtomicBool::new(false);
    let mut paths = vec![0.0; n_paths * n];
    let result: Result<()> = paths.par_chunks_mut(n).enumerate().try_for_each(|(i, row)| {
        let mut rng_e = path_rng(seed, 0, i);
        let mut rng_u = path_rng(seed, 1, i);
        let mut e = vec![0.0; n];
        inverse_path(spec, grid, opts.y_step, &mut rng_e, &mut e);
        let e_max = e[n - 1];
        let need = ((e_max / opts.aux_step).ceil() as usize + 1).max(2);
        let size = need.next_power_of_two();
        let generator = {
            let cached = generators.lock().get(&size).cloned();
            match cached {
                Some(g) => g,
                None => {
                    let g = Arc::new(FbmGenerator::new(hurst, size, opts.aux_step)?);
                    generators.lock().entry(size).or_insert(g).clone()
                }
            }
        };
        if generator.is_cholesky() {
            fallback.store(true, std::sync::atomic::Ordering::Relaxed);
        }
        let mut u = vec![0.0; size + 1];
        generator.sample(&mut rng_u, &mut u);
        fbm_to_fou(&mut u, opts.aux_step, theta);
        for j in 0..n {
            let x = e[j] / opts.aux_step;
            let k = (x.floor() as usize).min(size - 1);
            let w = x - k as f64;
            row[j] = u[k] * (1.0 - w) + u[k + 1] * w;
        }
        Ok(())
    });
    result?;
    Ok(PathEnsemble {
        time_grid: grid.to_vec(),
        paths,
        n_paths,
        seed,
        process: ProcessTag::TimeChangedFou,
        y_step: Some(opts.y_step),
        aux_step: Some(opts.aux_step),
        cholesky_fallback: fallback.into_inner(),
    })
}

/// Gaussian kernel density estimate at x and its standard error.
pub fn kde(samples: &[f64], x: f64, bandwidth: f64) -> (f64, f64) {
    let n = samples.len() as f64;
    let norm = 1.0 / (bandwidth * (2.0 * PI).sqrt());
    let k: Vec<f64> = samples
        .iter()
        .map(|&s| {
            let u = (x - s) / bandwidth;
            norm * (-0.5 * u * u).exp()
        })
        .collect();
    let mean = k.iter().sum::<f64>() / n;
    let var = k.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Sample mean and standard error.
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_and_circulant_share_covariance() {
        // both factors reproduce the fGn autocovariance exactly
        let (h, n, dt) = (0.7, 16, 0.1);
        let chol = FbmGenerator::cholesky(h, n, dt).unwrap();
        if let Factor::Cholesky(l) = &chol.factor {
            let cov = l * l.transpose();
            for i in 0..n {
                for j in 0..n {
                    assert!((cov[(i, j)] - fgn_autocov(h, dt, i.abs_diff(j))).abs() < 1e-14);
                }
            }
        }
        let circ = FbmGenerator::new(h, n, dt).unwrap();
        assert!(!circ.is_cholesky());
        if let Factor::Circulant { sqrt_eig, .. } = &circ.factor {
            // inverse DFT of the eigenvalues returns the embedded autocovariance
            let m = 2 * n;
            for lag in 0..4 {
                let c: f64 = (0..m)
                    .map(|j| sqrt_eig[j] * sqrt_eig[j] * (2.0 * PI * (j * lag) as f64 / m as f64).cos())
                    .sum();
                assert!((c - fgn_autocov(h, dt, lag)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn grid_checks() {
        assert!(sample_fbm(0.7, &[0.0, 0.1, 0.3], 2, 1).is_err());
        assert!(sample_fbm(0.4, &[0.0, 0.1, 0.2], 2, 1).is_err());
        assert!(sample_inverse_subordinator(&BernsteinSpec::stable(0.5).unwrap(), &[0.0, 1.0], 1, 1, 0.0).is_err());
    }

    #[test]
    fn streams_are_independent_of_order() {
        let mut a = path_rng(7, 0, 3);
        let _ = path_rng(7, 0, 2).random::<u64>();
        let mut b = path_rng(7, 0, 3);
        assert_eq!(a.random::<u64>(), b.random::<u64>());
        assert_ne!(path_rng(7, 0, 3).random::<u64>(), path_rng(7, 1, 3).random::<u64>());
    }
}
