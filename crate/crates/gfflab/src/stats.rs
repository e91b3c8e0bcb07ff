//! Moment estimators with standard errors and Kolmogorov–Smirnov tests.

use statrs::distribution::{Binomial, ContinuousCDF, Discrete, Normal};

/// Streaming mean and variance with an order-preserving merge.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64) * (other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            f64::INFINITY
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Moments::default();
        for x in iter {
            m.push(x);
        }
        m
    }
}

/// Estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

pub fn mean(xs: &[f64]) -> Estimate {
    let m: Moments = xs.iter().copied().collect();
    Estimate { value: m.mean(), stderr: m.stderr() }
}

/// Sample variance; the standard error uses the fourth central moment.
pub fn variance(xs: &[f64]) -> Estimate {
    let n = xs.len() as f64;
    let m: Moments = xs.iter().copied().collect();
    let mu = m.mean();
    let s2 = m.variance();
    let m4 = xs.iter().map(|x| (x - mu).powi(4)).sum::<f64>() / n;
    let spread = (m4 - s2 * s2 * (n - 3.0) / (n - 1.0)).max(0.0);
    Estimate { value: s2, stderr: (spread / n).sqrt() }
}

pub fn covariance(xs: &[f64], ys: &[f64]) -> Estimate {
    assert_eq!(xs.len(), ys.len());
    let (mx, my) = (mean(xs).value, mean(ys).value);
    let products: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    let n = xs.len() as f64;
    let e = mean(&products);
    Estimate { value: e.value * n / (n - 1.0), stderr: e.stderr }
}

/// Difference of two independent estimates.
pub fn difference(a: Estimate, b: Estimate) -> Estimate {
    Estimate { value: a.value - b.value, stderr: a.stderr.hypot(b.stderr) }
}

/// Asymptotic Kolmogorov tail `P(K > t)`.
pub fn kolmogorov_tail(t: f64) -> f64 {
    if t < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * t * t).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let s = n_eff.sqrt();
    kolmogorov_tail((s + 0.12 + 0.11 / s) * d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    KsResult { statistic: d, p_value: ks_p_value(d, n) }
}

pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> KsResult {
    let d = ks_distance(xs, ys);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    KsResult { statistic: d, p_value: ks_p_value(d, n * m / (n + m)) }
}

/// Sup distance between two empirical distribution functions.
pub fn ks_distance(xs: &[f64], ys: &[f64]) -> f64 {
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

pub fn normal_cdf(mean: f64, variance: f64) -> impl Fn(f64) -> f64 {
    let dist = Normal::new(mean, variance.sqrt()).expect("variance is positive");
    move |x| dist.cdf(x)
}

/// `E|X/n - p|` and `Var|X/n - p|` for `X ~ Binomial(n, p)`.
pub fn binomial_abs_deviation(p: f64, n: u64) -> (f64, f64) {
    if p <= 0.0 || p >= 1.0 {
        return (0.0, 0.0);
    }
    let dist = Binomial::new(p, n).expect("p in (0,1)");
    let mut mean = 0.0;
    for k in 0..=n {
        mean += dist.pmf(k) * (k as f64 / n as f64 - p).abs();
    }
    let second = p * (1.0 - p) / n as f64;
    (mean, (second - mean * mean).max(0.0))
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}
