use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF, Normal};

/// Upper tail `Pr(chi2_df > w)`.
pub fn chi2_sf(w: f64, df: f64) -> f64 {
    if w <= 0.0 {
        return 1.0;
    }
    if !w.is_finite() {
        return 0.0;
    }
    ChiSquared::new(df).map(|d| d.sf(w)).unwrap_or(f64::NAN)
}

/// `chi2_df` quantile at probability `p`.
pub fn chi2_quantile(p: f64, df: f64) -> f64 {
    let d = match ChiSquared::new(df) {
        Ok(d) => d,
        Err(_) => return f64::NAN,
    };
    let mut x = d.inverse_cdf(p);
    // Newton polish: the library inverse is only accurate to ~1e-6.
    for _ in 0..8 {
        let dens = d.pdf(x);
        if !(dens > 0.0) || !x.is_finite() {
            break;
        }
        let step = (d.cdf(x) - p) / dens;
        let next = x - step;
        if !(next > 0.0) {
            break;
        }
        x = next;
        if step.abs() <= 1e-15 * x {
            break;
        }
    }
    x
}

/// Two-sided standard normal p-value for a z statistic.
pub fn normal_two_sided(z: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    2.0 * n.sf(z.abs())
}

/// Linear-interpolation (type 7) quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let (a, b) = (sorted[lo], sorted[hi]);
    if lo == hi || a == b {
        return a;
    }
    if a.is_infinite() || b.is_infinite() {
        return if h - lo as f64 >= 0.5 { b } else { a };
    }
    a + (h - lo as f64) * (b - a)
}

/// Sorts a copy (infinities allowed) and returns the quantile.
pub fn quantile(data: &[f64], p: f64) -> f64 {
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, p)
}

pub fn mean(data: &[f64]) -> f64 {
    data.iter().sum::<f64>() / data.len() as f64
}

/// Unbiased sample variance.
pub fn variance(data: &[f64]) -> f64 {
    let m = mean(data);
    data.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (data.len() as f64 - 1.0)
}

/// Kolmogorov limiting survival function `Pr(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy)]
pub struct KsResult {
    pub statistic: f64,
    /// One-sided `sup (F_n - F)`.
    pub d_plus: f64,
    /// One-sided `sup (F - F_n)`.
    pub d_minus: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(data: &[f64], cdf: F) -> KsResult {
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let (mut dp, mut dm) = (0.0f64, 0.0f64);
    for (i, x) in v.iter().enumerate() {
        let f = cdf(*x);
        dp = dp.max((i + 1) as f64 / n - f);
        dm = dm.max(f - i as f64 / n);
    }
    let d = dp.max(dm);
    let sn = n.sqrt();
    KsResult {
        statistic: d,
        d_plus: dp,
        d_minus: dm,
        p_value: kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d),
    }
}

/// Two-sample Kolmogorov–Smirnov distance and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0usize, 0usize);
    let (mut dp, mut dm) = (0.0f64, 0.0f64);
    while i < n && j < m {
        let v = if x[i].total_cmp(&y[j]).is_le() { x[i] } else { y[j] };
        while i < n && x[i] == v {
            i += 1;
        }
        while j < m && y[j] == v {
            j += 1;
        }
        let diff = i as f64 / n as f64 - j as f64 / m as f64;
        dp = dp.max(diff);
        dm = dm.max(-diff);
    }
    let d = dp.max(dm);
    let ne = (n * m) as f64 / (n + m) as f64;
    let sn = ne.sqrt();
    KsResult {
        statistic: d,
        d_plus: dp,
        d_minus: dm,
        p_value: kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d),
    }
}
