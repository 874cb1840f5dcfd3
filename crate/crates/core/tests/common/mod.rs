use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tcfou_core::subordination::{AnalyticFunction, Tail};

/// Random four-term trigonometric sum on [0, horizon] with its grid argmax,
/// redrawn until the maximum is not at the origin.
pub fn random_fourier(rng: &mut ChaCha8Rng, horizon: f64) -> (AnalyticFunction, f64) {
    loop {
        let terms: Vec<(f64, f64, f64)> =
            (1..=4).map(|k| (rng.random_range(-1.0..1.0), k as f64 * rng.random_range(0.5..1.5), rng.random_range(0.0..6.3))).collect();
        let t1 = terms.clone();
        let t2 = terms.clone();
        let f = move |t: f64| t1.iter().map(|(a, w, p)| a * (w * t + p).sin()).sum::<f64>();
        let df = move |t: f64| t2.iter().map(|(a, w, p)| a * w * (w * t + p).cos()).sum::<f64>();
        let (mut best, mut arg) = (f64::NEG_INFINITY, 0.0);
        for k in 0..=4000 {
            let t = horizon * k as f64 / 4000.0;
            let v = f(t);
            if v > best {
                best = v;
                arg = t;
            }
        }
        if arg > 0.0 {
            return (AnalyticFunction::new(f, Tail::Power(0.0)).with_derivative(df), arg);
        }
    }
}
