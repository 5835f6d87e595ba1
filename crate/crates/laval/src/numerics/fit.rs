//! Log-log regression used to measure asymptotic rate exponents.

/// Result of a power-law fit `y ~ C x^p` over a window of abscissae.
#[derive(Debug, Clone, Copy)]
pub struct PowerFit {
    pub exponent: f64,
    pub log_coeff: f64,
    pub n_points: usize,
}

/// Least-squares slope of `ln y` against `ln x` restricted to
/// `window.0 <= x <= window.1`; pairs with nonpositive entries are skipped.
pub fn fit_exponent(xs: &[f64], ys: &[f64], window: (f64, f64)) -> Option<PowerFit> {
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    for (&x, &y) in xs.iter().zip(ys.iter()) {
        if x >= window.0 && x <= window.1 && x > 0.0 && y > 0.0 {
            lx.push(x.ln());
            ly.push(y.ln());
        }
    }
    if lx.len() < 3 {
        return None;
    }
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in lx.iter().zip(ly.iter()) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some(PowerFit {
        exponent: slope,
        log_coeff: my - slope * mx,
        n_points: lx.len(),
    })
}

/// Default asymptotic fit window `[upper/16, upper/2]`.
pub fn default_window(upper: f64) -> (f64, f64) {
    (upper / 16.0, upper / 2.0)
}

/// Least-squares order estimate from a refinement ladder: fits
/// `ln err ~ p ln h` given errors at grid spacings halving per level.
pub fn refinement_order(errors: &[f64]) -> Option<f64> {
    if errors.len() < 2 || errors.iter().any(|&e| e <= 0.0) {
        return None;
    }
    let hs: Vec<f64> = (0..errors.len()).map(|k| 0.5f64.powi(k as i32)).collect();
    fit_exponent(&hs, errors, (0.0, f64::INFINITY)).map(|f| f.exponent)
}
