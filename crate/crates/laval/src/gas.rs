//! Isentropic-gas closure: the critical state, the transformed speed
//! functions `A`, `B` with their inverses, and the coefficient functions
//! `E`, `G`, `K`, `b`, `p`, `H` of the degenerate subsonic and singular
//! supersonic problems.
//!
//! Everything is a pure scalar map of the speed `q` (or of a transformed
//! value `s`). The constructor precomputes Chebyshev interpolants of the
//! integral-defined functions; all closed-form expressions factor the sonic
//! root out algebraically, so evaluations stay fully accurate arbitrarily
//! close to the sonic state.

use crate::numerics::chebyshev::Chebyshev;
use crate::numerics::quadrature;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GasError {
    #[error("adiabatic exponent must exceed 1, got {0}")]
    BadGamma(f64),
    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },
}

type Result<T> = std::result::Result<T, GasError>;

/// Relative guard keeping evaluations away from the cavitation speed.
const QMAX_GUARD: f64 = 1e-14;

/// Polytropic gas closure for a fixed adiabatic exponent.
///
/// Immutable after construction; safe to share across threads.
#[derive(Debug, Clone)]
pub struct GasModel {
    gamma: f64,
    c_star: f64,
    q_max: f64,
    /// exponent of tau in A' denominators: gamma/(gamma-1)
    k_a: f64,
    /// 1/(gamma-1)
    k_rho: f64,
    q_lo: f64,
    q_hi: f64,
    /// A(c*-d)/d^2 on d in [0, c*-q_lo]
    a_tilde_sub: Chebyshev,
    /// A(c*+d)/d^2 on d in [0, q_hi-c*]
    a_tilde_sup: Chebyshev,
    /// B as a function of ln q on [ln q_lo, ln q_hi]
    b_tab: Chebyshev,
    /// E(u)/u^2 on [B(q_lo), 0]
    e_tilde: Chebyshev,
    e_tilde_d: Chebyshev,
    /// H(c*+d)/d^(3/2) on [0, q_hi-c*]
    h_tilde: Chebyshev,
}

impl GasModel {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 1.0) || !gamma.is_finite() {
            return Err(GasError::BadGamma(gamma));
        }
        let c_star = (2.0 / (gamma + 1.0)).sqrt();
        let q_max = (2.0 / (gamma - 1.0)).sqrt();
        let k_a = gamma / (gamma - 1.0);
        let k_rho = 1.0 / (gamma - 1.0);
        let q_lo = 0.02 * c_star;
        let q_hi = 0.9 * q_max;

        let tau = move |q: f64| 1.0 - 0.5 * (gamma - 1.0) * q * q;
        // A'(c*+x) = x * slope(x), with the sonic root factored out exactly
        let slope = move |x: f64| {
            let q = c_star + x;
            -(gamma + 1.0) * (2.0 * c_star + x) / (2.0 * q * tau(q).powf(k_a))
        };
        // A(c* ± d)/d^2 as a single smooth integral in the scaled variable;
        // a fixed composite rule keeps the samples smooth in d so the
        // interpolant fits converge at spectral rate
        let a_tilde_at = move |d: f64, sign: f64| {
            quadrature::gk15_composite(|s| s * slope(sign * d * s), 0.0, 1.0, 8)
        };
        let a_tilde_sub = Chebyshev::fit_adaptive(
            |d| a_tilde_at(d, -1.0),
            0.0,
            c_star - q_lo,
            1e-13,
        );
        let a_tilde_sup =
            Chebyshev::fit_adaptive(|d| a_tilde_at(d, 1.0), 0.0, q_hi - c_star, 1e-13);

        // B in the log variable w = ln q: dB/dw = rho(e^{2w}) is spectrally
        // smooth there (the 1/q factor is absorbed by the substitution), so
        // B comes out as a low-degree antiderivative
        let b_prime = move |q: f64| tau(q).powf(k_rho) / q;
        let b_tab = Chebyshev::fit_adaptive(
            move |w: f64| {
                let q = w.exp();
                tau(q).powf(k_rho)
            },
            q_lo.ln(),
            q_hi.ln(),
            1e-14,
        )
        .antiderivative(c_star.ln(), 0.0);

        // E(u)/u^2 via q = B^{-1}(u) solved against the B interpolant
        let u_lo = b_tab.eval(q_lo.ln());
        let b_for_inv = b_tab.clone();
        let b_inv_of = move |u: f64| {
            crate::numerics::rootfind::newton_bracketed(
                |w| b_for_inv.eval(w) - u,
                |w| tau(w.exp()).powf(k_rho),
                q_lo.ln(),
                c_star.ln(),
                1e-15,
            )
            .expect("B is strictly increasing on the subsonic branch")
            .exp()
        };
        let e_tilde = Chebyshev::fit_adaptive(
            move |u: f64| {
                if u >= -1e-300 {
                    // removable limit: E ~ (A''(c*)/2) (u/B'(c*))^2
                    let bp = b_prime(c_star);
                    return a_tilde_at(0.0, -1.0) / (bp * bp);
                }
                let q = b_inv_of(u);
                let d = c_star - q;
                let r = d / u;
                a_tilde_at(d, -1.0) * r * r
            },
            u_lo,
            0.0,
            1e-13,
        );
        let e_tilde_d = e_tilde.derivative();

        // H(c*+d)/d^(3/2); substitution removes the sqrt endpoint
        let h_tilde = Chebyshev::fit_adaptive(
            move |d: f64| {
                quadrature::gk15_composite(
                    |v| {
                        let x = d * v * v;
                        let s = -slope(x) * b_prime(c_star + x);
                        2.0 * v * v * s.sqrt()
                    },
                    0.0,
                    1.0,
                    8,
                )
            },
            0.0,
            q_hi - c_star,
            1e-13,
        );

        Ok(GasModel {
            gamma,
            c_star,
            q_max,
            k_a,
            k_rho,
            q_lo,
            q_hi,
            a_tilde_sub,
            a_tilde_sup,
            b_tab,
            e_tilde,
            e_tilde_d,
            h_tilde,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Critical (sonic) speed `sqrt(2/(gamma+1))`.
    pub fn c_star(&self) -> f64 {
        self.c_star
    }

    /// Cavitation speed `sqrt(2/(gamma-1))`.
    pub fn q_max(&self) -> f64 {
        self.q_max
    }

    /// Critical mass-flux density `rho(c*^2) c*`.
    pub fn critical_flux_density(&self) -> f64 {
        self.c_star.powf(1.0 + 2.0 / (self.gamma - 1.0))
    }

    fn tau(&self, q: f64) -> f64 {
        1.0 - 0.5 * (self.gamma - 1.0) * q * q
    }

    /// Bernoulli density as a function of q^2.
    pub fn density(&self, q_squared: f64) -> Result<f64> {
        let lim = self.q_max * self.q_max * (1.0 - QMAX_GUARD);
        if !(0.0..lim).contains(&q_squared) {
            return Err(GasError::Domain {
                what: "density argument q^2",
                value: q_squared,
            });
        }
        Ok((1.0 - 0.5 * (self.gamma - 1.0) * q_squared).powf(self.k_rho))
    }

    /// d rho / d(q^2).
    pub fn density_prime(&self, q_squared: f64) -> Result<f64> {
        let lim = self.q_max * self.q_max * (1.0 - QMAX_GUARD);
        if !(0.0..lim).contains(&q_squared) {
            return Err(GasError::Domain {
                what: "density argument q^2",
                value: q_squared,
            });
        }
        let t = 1.0 - 0.5 * (self.gamma - 1.0) * q_squared;
        Ok(-0.5 * t.powf(self.k_rho - 1.0))
    }

    fn check_q(&self, q: f64, what: &'static str) -> Result<()> {
        if !(q > 0.0 && q < self.q_max * (1.0 - QMAX_GUARD)) {
            return Err(GasError::Domain { what, value: q });
        }
        Ok(())
    }

    /// `A'(c* + x) / x`: the smooth factor left after removing the sonic root.
    #[inline]
    pub(crate) fn a_slope(&self, x: f64) -> f64 {
        let q = self.c_star + x;
        -(self.gamma + 1.0) * (2.0 * self.c_star + x) / (2.0 * q * self.tau(q).powf(self.k_a))
    }

    /// A(q) = ∫_{c*}^{q} (rho + 2 s^2 rho') / (s rho^2) ds.
    pub fn a(&self, q: f64) -> Result<f64> {
        self.check_q(q, "A argument q")?;
        Ok(self.a_raw(q))
    }

    #[inline]
    pub(crate) fn a_raw(&self, q: f64) -> f64 {
        let d = q - self.c_star;
        if d >= 0.0 {
            if q <= self.q_hi {
                d * d * self.a_tilde_sup.eval(d)
            } else {
                self.a_quadrature(q)
            }
        } else if q >= self.q_lo {
            d * d * self.a_tilde_sub.eval(-d)
        } else {
            self.a_quadrature(q)
        }
    }

    fn a_quadrature(&self, q: f64) -> f64 {
        quadrature::integrate(|s| (s - self.c_star) * self.a_slope(s - self.c_star), self.c_star, q, 1e-13)
    }

    /// A'(q), strictly positive below c*, zero at c*, negative above.
    pub fn a_prime(&self, q: f64) -> Result<f64> {
        self.check_q(q, "A' argument q")?;
        Ok(self.a_prime_raw(q))
    }

    #[inline]
    pub(crate) fn a_prime_raw(&self, q: f64) -> f64 {
        let x = q - self.c_star;
        x * self.a_slope(x)
    }

    /// A''(c*) < 0, from the closed form of A'.
    pub fn a_second_sonic(&self) -> f64 {
        self.a_slope(0.0)
    }

    /// B(q) = ∫_{c*}^{q} rho(s^2)/s ds, strictly increasing.
    pub fn b(&self, q: f64) -> Result<f64> {
        self.check_q(q, "B argument q")?;
        Ok(self.b_raw(q))
    }

    #[inline]
    pub(crate) fn b_raw(&self, q: f64) -> f64 {
        if q >= self.q_lo && q <= self.q_hi {
            self.b_tab.eval(q.ln())
        } else {
            quadrature::integrate(
                |s| self.tau(s).powf(self.k_rho) / s,
                self.c_star,
                q,
                1e-13,
            )
        }
    }

    /// B'(q) = rho(q^2)/q > 0.
    pub fn b_prime(&self, q: f64) -> Result<f64> {
        self.check_q(q, "B' argument q")?;
        Ok(self.b_prime_raw(q))
    }

    #[inline]
    pub(crate) fn b_prime_raw(&self, q: f64) -> f64 {
        self.tau(q).powf(self.k_rho) / q
    }

    /// Subsonic inverse of A: the root of A(q) = s with q in (0, c*].
    pub fn a_inv_sub(&self, s: f64) -> Result<f64> {
        if s > 0.0 {
            return Err(GasError::Domain {
                what: "A_- inverse argument s",
                value: s,
            });
        }
        let d = self.a_inv_delta(s, &self.a_tilde_sub, self.c_star - self.q_lo)?;
        Ok(self.c_star - d)
    }

    /// Supersonic inverse of A: the root of A(q) = s with q in [c*, q_max).
    pub fn a_inv_sup(&self, s: f64) -> Result<f64> {
        Ok(self.c_star + self.a_inv_sup_delta(s)?)
    }

    /// Distance q - c* of the supersonic inverse; exact near the sonic state.
    pub(crate) fn a_inv_sup_delta(&self, s: f64) -> Result<f64> {
        if s > 0.0 {
            return Err(GasError::Domain {
                what: "A_+ inverse argument s",
                value: s,
            });
        }
        self.a_inv_delta(s, &self.a_tilde_sup, self.q_hi - self.c_star)
    }

    /// Solve d^2 * a_tilde(d) = s for d >= 0: the fixed point
    /// d <- sqrt(s / a_tilde(d)) is stable through the degeneracy and is
    /// polished by two Newton steps on the full form.
    fn a_inv_delta(&self, s: f64, tab: &Chebyshev, d_max: f64) -> Result<f64> {
        if s == 0.0 {
            return Ok(0.0);
        }
        let mut d = (s / tab.eval(0.0)).sqrt();
        if !d.is_finite() {
            return Err(GasError::Domain {
                what: "A inverse argument s",
                value: s,
            });
        }
        for _ in 0..5 {
            let dn = (s / tab.eval(d.min(d_max))).sqrt();
            if (dn - d).abs() <= 1e-15 * d.max(1e-300) {
                d = dn;
                break;
            }
            d = dn;
        }
        // Newton on F(d) = d^2 a_tilde(d) - s, whose derivative is
        // d * slope(+-d) < 0 on both branches
        let supersonic = std::ptr::eq(tab, &self.a_tilde_sup);
        for _ in 0..8 {
            let dc = d.min(d_max);
            let f = dc * dc * tab.eval(dc) - s;
            let x = if supersonic { dc } else { -dc };
            let df = self.a_slope(x) * dc;
            if df == 0.0 {
                break;
            }
            let step = f / df;
            let dn = d - step;
            if !dn.is_finite() || dn < 0.0 {
                break;
            }
            d = dn;
            if step.abs() <= 1e-15 * d.max(1e-300) {
                break;
            }
        }
        if d > d_max * (1.0 + 1e-9) {
            return Err(GasError::Domain {
                what: "A inverse argument s (below branch infimum)",
                value: s,
            });
        }
        Ok(d.min(d_max))
    }

    /// Inverse of B by safeguarded Newton in the log variable.
    pub fn b_inv(&self, s: f64) -> Result<f64> {
        let (blo, bhi) = (self.b_raw(self.q_lo), self.b_raw(self.q_hi));
        if s < blo || s > bhi {
            return Err(GasError::Domain {
                what: "B inverse argument s",
                value: s,
            });
        }
        crate::numerics::rootfind::newton_bracketed(
            |w| self.b_tab.eval(w) - s,
            |w| {
                let q = w.exp();
                self.tau(q).powf(self.k_rho)
            },
            self.q_lo.ln(),
            self.q_hi.ln(),
            1e-15,
        )
        .map(f64::exp)
        .ok_or(GasError::Domain {
            what: "B inverse argument s",
            value: s,
        })
    }

    /// E(s) = A(B^{-1}(s)) for s < 0.
    pub fn e(&self, s: f64) -> Result<f64> {
        if s >= 0.0 {
            return Err(GasError::Domain {
                what: "E argument s",
                value: s,
            });
        }
        if s < self.e_tilde.lo() {
            return Err(GasError::Domain {
                what: "E argument s (below tabulated range)",
                value: s,
            });
        }
        Ok(self.e_raw(s))
    }

    #[inline]
    pub(crate) fn e_raw(&self, u: f64) -> f64 {
        u * u * self.e_tilde.eval(u)
    }

    /// E'(s) > 0 from the closed form, evaluated at q = B^{-1}(s).
    pub fn e_prime(&self, s: f64) -> Result<f64> {
        if s >= 0.0 {
            return Err(GasError::Domain {
                what: "E' argument s",
                value: s,
            });
        }
        let q = self.b_inv(s)?;
        Ok(self.e_prime_at_q(q))
    }

    fn e_prime_at_q(&self, q: f64) -> f64 {
        // (1 - (gamma+1) q^2 / 2) tau^{-2/(gamma-1)-1}, sonic root factored
        let num = -0.5 * (self.gamma + 1.0) * (q - self.c_star) * (q + self.c_star);
        num * self.tau(q).powf(-2.0 * self.k_rho - 1.0)
    }

    /// E''(s) < 0 from the closed form.
    pub fn e_second(&self, s: f64) -> Result<f64> {
        if s >= 0.0 {
            return Err(GasError::Domain {
                what: "E'' argument s",
                value: s,
            });
        }
        let q = self.b_inv(s)?;
        Ok(self.e_second_at_q(q))
    }

    fn e_second_at_q(&self, q: f64) -> f64 {
        -(self.gamma + 1.0) * q.powi(4) * self.tau(q).powf(-3.0 * self.k_rho - 2.0)
    }

    /// Fast interpolated E for solver sweeps.
    #[inline]
    pub(crate) fn e_fast(&self, u: f64) -> f64 {
        u * u * self.e_tilde.eval(u)
    }

    /// E and E' in one pass, for the relaxation inner loop.
    #[inline]
    pub(crate) fn e_and_prime_fast(&self, u: f64) -> (f64, f64) {
        let et = self.e_tilde.eval(u);
        let etd = self.e_tilde_d.eval(u);
        (u * u * et, 2.0 * u * et + u * u * etd)
    }

    pub(crate) fn e_lo(&self) -> f64 {
        self.e_tilde.lo()
    }

    /// G(s) = E'(E^{-1}(s)) for s < 0.
    pub fn g(&self, s: f64) -> Result<f64> {
        let t = self.e_inv(s)?;
        let q = self.b_inv(t)?;
        Ok(self.e_prime_at_q(q))
    }

    /// G'(s) = E''(t)/E'(t) at t = E^{-1}(s) < 0.
    pub fn g_prime(&self, s: f64) -> Result<f64> {
        let t = self.e_inv(s)?;
        let q = self.b_inv(t)?;
        Ok(self.e_second_at_q(q) / self.e_prime_at_q(q))
    }

    /// Inverse of E on the negative axis by the same stable fixed point.
    pub fn e_inv(&self, s: f64) -> Result<f64> {
        if s >= 0.0 {
            return Err(GasError::Domain {
                what: "E inverse argument s",
                value: s,
            });
        }
        let u_lo = self.e_tilde.lo();
        if s < self.e_raw(u_lo) {
            return Err(GasError::Domain {
                what: "E inverse argument s (below tabulated range)",
                value: s,
            });
        }
        let mut u = -(s / self.e_tilde.eval(0.0)).sqrt();
        for _ in 0..60 {
            let un = -(s / self.e_tilde.eval(u.max(u_lo))).sqrt();
            if (un - u).abs() <= 1e-16 * u.abs().max(1e-300) {
                u = un;
                break;
            }
            u = un;
        }
        Ok(u.max(u_lo))
    }

    /// K(s) = B(A_+^{-1}(s)) for s < 0.
    pub fn k(&self, s: f64) -> Result<f64> {
        let q = self.a_inv_sup(s)?;
        Ok(self.b_raw(q))
    }

    /// K'(s) < 0 for s < 0.
    pub fn k_prime(&self, s: f64) -> Result<f64> {
        Ok(-self.wave_b(s)?)
    }

    /// K''(s) < 0 for s < 0.
    pub fn k_second(&self, s: f64) -> Result<f64> {
        Ok(-self.wave_p(s)?)
    }

    /// b(s) = -K'(s) > 0: squared characteristic slope of the supersonic
    /// system; blows up like |s|^{-1/2} toward the sonic state.
    pub fn wave_b(&self, s: f64) -> Result<f64> {
        if s >= 0.0 {
            return Err(GasError::Domain {
                what: "wave coefficient argument s",
                value: s,
            });
        }
        let d = self.a_inv_sup_delta(s)?;
        Ok(self.wave_b_delta(d))
    }

    /// b as a function of d = q - c* >= 0 (stable near the sonic state).
    #[inline]
    pub(crate) fn wave_b_delta(&self, d: f64) -> f64 {
        let q = self.c_star + d;
        self.tau(q).powf(2.0 * self.k_rho + 1.0)
            / (0.5 * (self.gamma + 1.0) * d * (q + self.c_star))
    }

    /// p(s) = -K''(s) > 0.
    pub fn wave_p(&self, s: f64) -> Result<f64> {
        if s >= 0.0 {
            return Err(GasError::Domain {
                what: "wave coefficient argument s",
                value: s,
            });
        }
        let d = self.a_inv_sup_delta(s)?;
        Ok(self.wave_p_delta(d))
    }

    #[inline]
    pub(crate) fn wave_p_delta(&self, d: f64) -> f64 {
        let q = self.c_star + d;
        let denom = 0.5 * (self.gamma + 1.0) * d * (q + self.c_star);
        (self.gamma + 1.0) * q.powi(4) * self.tau(q).powf(3.0 * self.k_rho + 1.0)
            / denom.powi(3)
    }

    /// H(q) = ∫_{c*}^{q} sqrt(-A'(s) B'(s)) ds for q >= c*.
    pub fn h(&self, q: f64) -> Result<f64> {
        if !(q >= self.c_star && q < self.q_max * (1.0 - QMAX_GUARD)) {
            return Err(GasError::Domain {
                what: "H argument q",
                value: q,
            });
        }
        let d = q - self.c_star;
        if q <= self.q_hi {
            Ok(d.powf(1.5) * self.h_tilde.eval(d))
        } else {
            Ok(quadrature::integrate(
                |v| {
                    let x = v * v;
                    let s = -self.a_slope(x) * self.b_prime_raw(self.c_star + x);
                    2.0 * v * v * s.sqrt()
                },
                0.0,
                d.sqrt(),
                1e-13,
            ))
        }
    }

    /// Characteristic slope beta(q) = sqrt(-A'/B') of the hodograph system,
    /// defined for q >= c* (zero at the sonic state).
    pub fn beta(&self, q: f64) -> Result<f64> {
        if q < self.c_star {
            return Err(GasError::Domain {
                what: "beta argument q",
                value: q,
            });
        }
        self.check_q(q, "beta argument q")?;
        let d = q - self.c_star;
        Ok((1.0 / self.wave_b_delta(d.max(1e-300))).sqrt())
    }

    /// Lower edge of the tabulated speed range.
    pub fn q_floor(&self) -> f64 {
        self.q_lo
    }

    /// Upper edge of the tabulated speed range.
    pub fn q_ceil(&self) -> f64 {
        self.q_hi
    }
}
