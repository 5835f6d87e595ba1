//! Chebyshev interpolants used to memoize the gas-dynamic integrals.

/// Chebyshev series on an interval `[a, b]`, evaluated by Clenshaw recurrence.
#[derive(Debug, Clone)]
pub struct Chebyshev {
    a: f64,
    b: f64,
    coeffs: Vec<f64>,
}

impl Chebyshev {
    /// Fit `f` at Chebyshev-Gauss-Lobatto points of degree `n` on `[a, b]`.
    pub fn fit<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> Self {
        assert!(n >= 2 && b > a);
        let nf = n as f64;
        let samples: Vec<f64> = (0..=n)
            .map(|j| {
                let x = (std::f64::consts::PI * j as f64 / nf).cos();
                f(0.5 * (a + b) + 0.5 * (b - a) * x)
            })
            .collect();
        let mut coeffs = vec![0.0; n + 1];
        for (k, c) in coeffs.iter_mut().enumerate() {
            let mut s = 0.0;
            for (j, &fx) in samples.iter().enumerate() {
                let w = if j == 0 || j == n { 0.5 } else { 1.0 };
                s += w * fx * (std::f64::consts::PI * (j * k) as f64 / nf).cos();
            }
            let w = if k == 0 || k == n { 1.0 } else { 2.0 };
            *c = w * s / nf;
        }
        Chebyshev { a, b, coeffs }
    }

    /// Fit with the degree doubled until the trailing quarter of the
    /// coefficients falls below `tol` relative to the largest one.
    pub fn fit_adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Self {
        let mut n = 32;
        loop {
            let c = Self::fit(&f, a, b, n);
            let scale = c.coeffs.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            let tail = c.coeffs[n - n / 4..]
                .iter()
                .fold(0.0f64, |m, &v| m.max(v.abs()));
            if tail <= tol * scale.max(1e-300) || n >= 2048 {
                return c;
            }
            n *= 2;
        }
    }

    pub fn lo(&self) -> f64 {
        self.a
    }

    pub fn hi(&self) -> f64 {
        self.b
    }

    /// Number of stored coefficients.
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Clenshaw evaluation. `x` is clamped to the fit interval.
    pub fn eval(&self, x: f64) -> f64 {
        let t = ((2.0 * x - self.a - self.b) / (self.b - self.a)).clamp(-1.0, 1.0);
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for &c in self.coeffs.iter().skip(1).rev() {
            let tmp = 2.0 * t * b1 - b2 + c;
            b2 = b1;
            b1 = tmp;
        }
        t * b1 - b2 + self.coeffs[0]
    }

    /// Interpolant of the antiderivative anchored so that the value at
    /// `anchor` equals `value`, from the coefficient recurrence
    /// `A_k = (a_{k-1} - a_{k+1}) / (2k)`.
    pub fn antiderivative(&self, anchor: f64, value: f64) -> Chebyshev {
        let n = self.coeffs.len();
        let scale = 0.5 * (self.b - self.a);
        let mut out = vec![0.0; n + 1];
        for k in 1..=n {
            // coeffs[0] holds the plain constant (the halved-c0 convention
            // doubles it inside the recurrence)
            let prev = if k == 1 {
                2.0 * self.coeffs[0]
            } else {
                self.coeffs[k - 1]
            };
            let next = if k + 1 < n { self.coeffs[k + 1] } else { 0.0 };
            out[k] = scale * (prev - next) / (2.0 * k as f64);
        }
        let mut anti = Chebyshev {
            a: self.a,
            b: self.b,
            coeffs: out,
        };
        let off = value - anti.eval(anchor);
        anti.coeffs[0] += off;
        anti
    }

    /// Interpolant of the derivative, from the coefficient recurrence.
    pub fn derivative(&self) -> Chebyshev {
        let n = self.coeffs.len();
        let mut d = vec![0.0; n.max(2)];
        if n >= 2 {
            let mut next = 0.0;
            let mut next2 = 0.0;
            for k in (1..n).rev() {
                let dk = if k + 2 < n { next2 } else { 0.0 } + 2.0 * k as f64 * self.coeffs[k];
                d[k - 1] = dk;
                next2 = next;
                next = dk;
            }
            d[0] *= 0.5;
        }
        let scale = 2.0 / (self.b - self.a);
        for v in d.iter_mut() {
            *v *= scale;
        }
        d.truncate(n.saturating_sub(1).max(1));
        Chebyshev {
            a: self.a,
            b: self.b,
            coeffs: d,
        }
    }
}
