//! 1-D interpolation on monotone sample sets and cumulative integration.

/// Cumulative trapezoid integral of samples `(x, y)`; result[0] = 0.
pub fn cumtrapz(x: &[f64], y: &[f64]) -> Vec<f64> {
    assert_eq!(x.len(), y.len());
    let mut out = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..x.len() {
        acc += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
        out.push(acc);
    }
    out
}

/// Monotone cubic Hermite interpolant (Fritsch-Carlson slope limiting).
///
/// Used for the boundary maps and their inverses: it preserves strict
/// monotonicity of the data, so inverse maps stay well defined.
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        assert_eq!(x.len(), y.len());
        assert!(x.len() >= 2);
        let n = x.len();
        let mut d = vec![0.0; n - 1];
        for i in 0..n - 1 {
            let h = x[i + 1] - x[i];
            assert!(h > 0.0, "abscissae must be strictly increasing");
            d[i] = (y[i + 1] - y[i]) / h;
        }
        let mut m = vec![0.0; n];
        m[0] = d[0];
        m[n - 1] = d[n - 2];
        for i in 1..n - 1 {
            m[i] = if d[i - 1] * d[i] <= 0.0 {
                0.0
            } else {
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                let w1 = 2.0 * h1 + h0;
                let w2 = h1 + 2.0 * h0;
                (w1 + w2) / (w1 / d[i - 1] + w2 / d[i])
            };
        }
        // Fritsch-Carlson limiter
        for i in 0..n - 1 {
            if d[i] == 0.0 {
                m[i] = 0.0;
                m[i + 1] = 0.0;
            } else {
                let a = m[i] / d[i];
                let b = m[i + 1] / d[i];
                let s = (a * a + b * b).sqrt();
                if s > 3.0 {
                    m[i] = 3.0 * a / s * d[i];
                    m[i + 1] = 3.0 * b / s * d[i];
                }
            }
        }
        MonotoneCubic { x, y, m }
    }

    fn segment(&self, x: f64) -> usize {
        match self
            .x
            .binary_search_by(|v| v.partial_cmp(&x).expect("NaN abscissa"))
        {
            Ok(i) => i.min(self.x.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.x.len() - 2),
        }
    }

    pub fn eval(&self, xq: f64) -> f64 {
        let i = self.segment(xq);
        let h = self.x[i + 1] - self.x[i];
        let t = ((xq - self.x[i]) / h).clamp(0.0, 1.0);
        let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
        let h10 = t * (1.0 - t) * (1.0 - t);
        let h01 = t * t * (3.0 - 2.0 * t);
        let h11 = t * t * (t - 1.0);
        h00 * self.y[i] + h10 * h * self.m[i] + h01 * self.y[i + 1] + h11 * h * self.m[i + 1]
    }

    pub fn xs(&self) -> &[f64] {
        &self.x
    }

    pub fn ys(&self) -> &[f64] {
        &self.y
    }
}

/// Piecewise-linear interpolation with clamped extrapolation.
pub fn lerp_clamped(x: &[f64], y: &[f64], xq: f64) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let n = x.len();
    if xq <= x[0] {
        return y[0];
    }
    if xq >= x[n - 1] {
        return y[n - 1];
    }
    let i = match x.binary_search_by(|v| v.partial_cmp(&xq).expect("NaN abscissa")) {
        Ok(i) => return y[i],
        Err(i) => i - 1,
    };
    let t = (xq - x[i]) / (x[i + 1] - x[i]);
    y[i] * (1.0 - t) + y[i + 1] * t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cumtrapz_linear_exact() {
        let x: Vec<f64> = (0..=10).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|&v| 2.0 * v).collect();
        let c = cumtrapz(&x, &y);
        assert!((c[10] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn monotone_data_stays_monotone() {
        let x = vec![0.0, 0.3, 0.5, 0.9, 1.0];
        let y = vec![0.0, 0.1, 0.7, 0.95, 1.0];
        let f = MonotoneCubic::new(x, y);
        let mut prev = f.eval(0.0);
        for k in 1..=200 {
            let v = f.eval(k as f64 / 200.0);
            assert!(v >= prev - 1e-14);
            prev = v;
        }
    }

    #[test]
    fn interpolates_nodes_exactly() {
        let x = vec![0.0, 1.0, 2.0, 4.0];
        let y = vec![1.0, 3.0, 3.5, 8.0];
        let f = MonotoneCubic::new(x.clone(), y.clone());
        for (xi, yi) in x.iter().zip(y.iter()) {
            assert!((f.eval(*xi) - yi).abs() < 1e-14);
        }
    }
}
