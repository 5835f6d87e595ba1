//! Nozzle geometry in the physical plane and the nonlocal maps tying wall
//! and inlet arclength to potential-plane coordinates.
//!
//! The wall is `y = f(x)` on `[l_-, l_+]` with the throat at `x = 0`; only
//! the upper half of the symmetric nozzle is carried. The inlet `x = g(y)`
//! is a near-circular arc that the flow crosses normally.

use crate::gas::GasModel;
use crate::numerics::interp::{cumtrapz, MonotoneCubic};
use crate::{Error, Result};
use std::sync::Arc;

/// Upper-wall shape with three derivatives.
pub trait WallShape: Send + Sync {
    fn f(&self, x: f64) -> f64;
    fn f1(&self, x: f64) -> f64;
    fn f2(&self, x: f64) -> f64;
    fn f3(&self, x: f64) -> f64;
}

/// Inlet arc shape with two derivatives.
pub trait InletShape: Send + Sync {
    fn g(&self, y: f64) -> f64;
    fn g1(&self, y: f64) -> f64;
    fn g2(&self, y: f64) -> f64;
}

/// Power-law wall: f''(x) = delta |x|^lambda exactly on each side.
#[derive(Debug, Clone)]
pub struct PowerLawWall {
    pub f0: f64,
    pub delta: f64,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
}

impl PowerLawWall {
    fn lambda(&self, x: f64) -> f64 {
        if x < 0.0 {
            self.lambda_minus
        } else {
            self.lambda_plus
        }
    }
}

impl WallShape for PowerLawWall {
    fn f(&self, x: f64) -> f64 {
        let l = self.lambda(x);
        self.f0 + self.delta * x.abs().powf(l + 2.0) / ((l + 1.0) * (l + 2.0))
    }

    fn f1(&self, x: f64) -> f64 {
        let l = self.lambda(x);
        x.signum() * self.delta * x.abs().powf(l + 1.0) / (l + 1.0)
    }

    fn f2(&self, x: f64) -> f64 {
        self.delta * x.abs().powf(self.lambda(x))
    }

    fn f3(&self, x: f64) -> f64 {
        let l = self.lambda(x);
        if x == 0.0 {
            0.0
        } else {
            x.signum() * self.delta * l * x.abs().powf(l - 1.0)
        }
    }
}

/// Circular inlet arc `x = xc - sqrt(r0^2 - y^2)`.
#[derive(Debug, Clone)]
pub struct ArcInlet {
    pub x_center: f64,
    pub r0: f64,
}

impl InletShape for ArcInlet {
    fn g(&self, y: f64) -> f64 {
        self.x_center - (self.r0 * self.r0 - y * y).sqrt()
    }

    fn g1(&self, y: f64) -> f64 {
        y / (self.r0 * self.r0 - y * y).sqrt()
    }

    fn g2(&self, y: f64) -> f64 {
        let d = self.r0 * self.r0 - y * y;
        self.r0 * self.r0 / (d * d.sqrt())
    }
}

/// Degenerate straight inlet `x = l_-` used by the flat-channel fixture.
#[derive(Debug, Clone)]
pub struct VerticalInlet {
    pub x: f64,
}

impl InletShape for VerticalInlet {
    fn g(&self, _y: f64) -> f64 {
        self.x
    }

    fn g1(&self, _y: f64) -> f64 {
        0.0
    }

    fn g2(&self, _y: f64) -> f64 {
        0.0
    }
}

/// Nozzle geometry plus the curvature-envelope constants it is supposed to
/// satisfy.
#[derive(Clone)]
pub struct NozzleSpec {
    pub l_minus: f64,
    pub l_plus: f64,
    pub f0: f64,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    pub delta1_minus: f64,
    pub delta2_minus: f64,
    pub delta1_plus: f64,
    pub delta2_plus: f64,
    pub wall: Arc<dyn WallShape>,
    pub inlet: Arc<dyn InletShape>,
}

impl std::fmt::Debug for NozzleSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NozzleSpec")
            .field("l_minus", &self.l_minus)
            .field("l_plus", &self.l_plus)
            .field("f0", &self.f0)
            .field("lambda_minus", &self.lambda_minus)
            .field("lambda_plus", &self.lambda_plus)
            .finish_non_exhaustive()
    }
}

impl NozzleSpec {
    /// Canonical power-law family with `delta1 = delta2 = delta` and the
    /// circular-arc inlet. `delta = 0` yields the straight-channel fixture
    /// (which fails admissibility but is exact for solver tests).
    pub fn default_wall(
        l_minus: f64,
        l_plus: f64,
        f0: f64,
        lambda_minus: f64,
        lambda_plus: f64,
        delta: f64,
    ) -> Result<Self> {
        if !(l_minus < 0.0 && l_plus > 0.0 && f0 > 0.0) {
            return Err(Error::Geometry(format!(
                "need l_minus < 0 < l_plus and f0 > 0, got ({l_minus}, {l_plus}, {f0})"
            )));
        }
        if !(lambda_minus > 2.0 && lambda_plus > 2.0) && delta != 0.0 {
            return Err(Error::Geometry(format!(
                "wall exponents must exceed 2, got ({lambda_minus}, {lambda_plus})"
            )));
        }
        if delta < 0.0 {
            return Err(Error::Geometry(format!("delta must be >= 0, got {delta}")));
        }
        let wall = Arc::new(PowerLawWall {
            f0,
            delta,
            lambda_minus,
            lambda_plus,
        });
        let fl = wall.f(l_minus);
        let f1l = wall.f1(l_minus);
        let inlet: Arc<dyn InletShape> = if f1l == 0.0 {
            Arc::new(VerticalInlet { x: l_minus })
        } else {
            let r0 = fl * (f1l * f1l + 1.0).sqrt() / (-f1l);
            Arc::new(ArcInlet {
                x_center: l_minus - fl / f1l,
                r0,
            })
        };
        Ok(NozzleSpec {
            l_minus,
            l_plus,
            f0,
            lambda_minus,
            lambda_plus,
            delta1_minus: delta,
            delta2_minus: delta,
            delta1_plus: delta,
            delta2_plus: delta,
            wall,
            inlet,
        })
    }

    /// Flat channel: exact uniform-flow fixture.
    pub fn straight_channel(l_minus: f64, l_plus: f64, f0: f64) -> Result<Self> {
        Self::default_wall(l_minus, l_plus, f0, 3.0, 3.0, 0.0)
    }

    /// Inlet top height f(l_-).
    pub fn inlet_height(&self) -> f64 {
        self.wall.f(self.l_minus)
    }

    /// Radius of the reference inlet arc.
    pub fn r0(&self) -> Option<f64> {
        let f1l = self.wall.f1(self.l_minus);
        if f1l == 0.0 {
            None
        } else {
            Some(self.inlet_height() * (f1l * f1l + 1.0).sqrt() / (-f1l))
        }
    }

    /// Flow angle at the inlet (velocity along the inward normal).
    pub fn theta_in(&self, y: f64) -> f64 {
        (-self.inlet.g1(y)).atan()
    }

    pub fn theta_in_prime(&self, y: f64) -> f64 {
        let g1 = self.inlet.g1(y);
        -self.inlet.g2(y) / (1.0 + g1 * g1)
    }

    /// Flow angle on the wall (slip condition).
    pub fn theta_wall(&self, x: f64) -> f64 {
        self.wall.f1(x).atan()
    }

    pub fn theta_wall_prime(&self, x: f64) -> f64 {
        let f1 = self.wall.f1(x);
        self.wall.f2(x) / (1.0 + f1 * f1)
    }
}

/// Throat mass flux `m = f(0) c*^{1 + 2/(gamma-1)}` of the sonic-throat flow.
pub fn mass_flux(spec: &NozzleSpec, gas: &GasModel) -> f64 {
    spec.wall.f(0.0) * gas.critical_flux_density()
}

/// One admissibility condition outcome.
#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub name: &'static str,
    pub passed: bool,
    pub worst_x: f64,
    pub detail: String,
}

/// Full admissibility report; report-only, never fails hard.
#[derive(Debug, Clone)]
pub struct AdmissibilityReport {
    pub conditions: Vec<ConditionReport>,
    pub warnings: Vec<String>,
}

impl AdmissibilityReport {
    pub fn all_passed(&self) -> bool {
        self.conditions.iter().all(|c| c.passed)
    }
}

/// Check the curvature envelopes, inlet compatibility and third-derivative
/// bounds at sampled points. Length smallness is warned about, not failed:
/// the admissible thresholds are non-explicit and left as an experimental
/// knob.
pub fn validate(spec: &NozzleSpec) -> AdmissibilityReport {
    let mut conditions = Vec::new();
    let mut warnings = Vec::new();
    let n = 101;
    let rel_tol = 1e-9;

    // convergent-side envelope: delta1 (-x)^lambda <= f'' <= delta2 (-x)^lambda
    {
        let (mut ok, mut worst, mut worst_dev) = (true, 0.0f64, 0.0f64);
        for k in 0..=n {
            let x = spec.l_minus * (k as f64 / n as f64);
            let env = (-x).powf(spec.lambda_minus);
            let f2 = spec.wall.f2(x);
            let lo = spec.delta1_minus * env;
            let hi = spec.delta2_minus * env;
            let dev = (lo - f2).max(f2 - hi);
            if dev > rel_tol * env.max(1e-300) + 1e-14 {
                ok = false;
                if dev > worst_dev {
                    worst_dev = dev;
                    worst = x;
                }
            }
        }
        let exponent_ok = spec.lambda_minus > 2.0;
        conditions.push(ConditionReport {
            name: "wall curvature envelope, convergent side",
            passed: ok && exponent_ok && spec.delta1_minus > 0.0,
            worst_x: worst,
            detail: if !exponent_ok {
                format!("wall exponent {} must exceed 2", spec.lambda_minus)
            } else if spec.delta1_minus <= 0.0 {
                "degenerate envelope (delta = 0)".into()
            } else {
                format!("max envelope violation {worst_dev:.3e}")
            },
        });
    }

    // divergent-side envelope plus f''' >= 0
    {
        let (mut ok, mut worst, mut worst_dev) = (true, 0.0f64, 0.0f64);
        let mut f3_ok = true;
        let mut f3_worst = 0.0;
        for k in 0..=n {
            let x = spec.l_plus * (k as f64 / n as f64);
            let env = x.powf(spec.lambda_plus);
            let f2 = spec.wall.f2(x);
            let lo = spec.delta1_plus * env;
            let hi = spec.delta2_plus * env;
            let dev = (lo - f2).max(f2 - hi);
            if dev > rel_tol * env.max(1e-300) + 1e-14 {
                ok = false;
                if dev > worst_dev {
                    worst_dev = dev;
                    worst = x;
                }
            }
            if spec.wall.f3(x) < -1e-14 {
                f3_ok = false;
                f3_worst = x;
            }
        }
        let exponent_ok = spec.lambda_plus > 2.0;
        conditions.push(ConditionReport {
            name: "wall curvature envelope, divergent side",
            passed: ok && exponent_ok && spec.delta1_plus > 0.0,
            worst_x: worst,
            detail: if !exponent_ok {
                format!("wall exponent {} must exceed 2", spec.lambda_plus)
            } else if spec.delta1_plus <= 0.0 {
                "degenerate envelope (delta = 0)".into()
            } else {
                format!("max envelope violation {worst_dev:.3e}")
            },
        });
        conditions.push(ConditionReport {
            name: "wall third derivative sign, divergent side",
            passed: f3_ok,
            worst_x: f3_worst,
            detail: String::new(),
        });
    }

    // inlet compatibility at the corner and the axis
    {
        let fl = spec.inlet_height();
        let e1 = spec.inlet.g1(0.0).abs();
        let e2 = (spec.inlet.g(fl) - spec.l_minus).abs();
        let e3 = (spec.inlet.g1(fl) + spec.wall.f1(spec.l_minus)).abs();
        let ok = e1 < 1e-10 && e2 < 1e-10 && e3 < 1e-10;
        conditions.push(ConditionReport {
            name: "inlet compatibility",
            passed: ok,
            worst_x: spec.l_minus,
            detail: format!("|g'(0)|={e1:.2e}, |g(f(l-)) - l-|={e2:.2e}, |g'+f'|={e3:.2e}"),
        });
    }

    // inlet curvature window around the reference arc
    if let Some(r0) = spec.r0() {
        let fl = spec.inlet_height();
        let curv = |y: f64| {
            let g1 = spec.inlet.g1(y);
            spec.inlet.g2(y) / (1.0 + g1 * g1).powf(1.5)
        };
        let (mut ok, mut worst, mut worst_dev) = (true, 0.0f64, 0.0f64);
        let mut second_ok = true;
        // modulus epsilon(s) = |s|
        let second_bound = spec.l_minus.abs() * (-spec.l_minus).powf(1.5 * spec.lambda_minus);
        for k in 0..=50 {
            let y = fl * (k as f64 / 50.0);
            let c = curv(y);
            let dev = (0.5 / r0 - c).max(c - 1.5 / r0);
            if dev > 1e-9 / r0 {
                ok = false;
                if dev > worst_dev {
                    worst_dev = dev;
                    worst = y;
                }
            }
            // second derivative of the normalized slope by central differences
            if k > 0 && k < 50 {
                let h = fl / 200.0;
                let c2 = (curv(y + h) - curv(y - h)) / (2.0 * h);
                if c2.abs() > second_bound + 1e-9 / r0 {
                    second_ok = false;
                }
            }
        }
        conditions.push(ConditionReport {
            name: "inlet curvature window",
            passed: ok && second_ok,
            worst_x: worst,
            detail: format!("max window violation {worst_dev:.3e}, r0 = {r0:.4}"),
        });
    } else {
        conditions.push(ConditionReport {
            name: "inlet curvature window",
            passed: false,
            worst_x: 0.0,
            detail: "degenerate straight inlet (no reference arc)".into(),
        });
    }

    // third-derivative envelope |f'''| <= delta3 x^{lambda-1}: report the
    // implied constant, fail only if unbounded toward the throat
    {
        let mut sup = 0.0f64;
        let mut sup_x = 0.0;
        let mut finite = true;
        for k in 1..=n {
            let x = spec.l_plus * (k as f64 / n as f64);
            let ratio = spec.wall.f3(x).abs() / x.powf(spec.lambda_plus - 1.0);
            if !ratio.is_finite() || ratio > 1e8 {
                finite = false;
            }
            if ratio > sup {
                sup = ratio;
                sup_x = x;
            }
        }
        conditions.push(ConditionReport {
            name: "wall third derivative envelope, divergent side",
            passed: finite,
            worst_x: sup_x,
            detail: format!("implied delta3+ = {sup:.4e}"),
        });
    }

    if spec.l_minus < -0.5 {
        warnings.push(format!(
            "|l_minus| = {} may exceed the admissible nozzle length; expect outer-iteration divergence",
            -spec.l_minus
        ));
    }
    if spec.l_plus > 0.5 {
        warnings.push(format!(
            "l_plus = {} may exceed the admissible nozzle length; expect outer-iteration divergence",
            spec.l_plus
        ));
    }

    AdmissibilityReport {
        conditions,
        warnings,
    }
}

/// Speed profile sampled on a strictly increasing abscissa grid.
#[derive(Debug, Clone)]
pub struct Profile {
    interp: MonotoneCubic,
}

impl Profile {
    pub fn new(xs: Vec<f64>, vals: Vec<f64>) -> Self {
        Profile {
            interp: MonotoneCubic::new(xs, vals),
        }
    }

    pub fn constant(lo: f64, hi: f64, value: f64) -> Self {
        Self::new(vec![lo, hi], vec![value, value])
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.interp.eval(x)
    }

    pub fn xs(&self) -> &[f64] {
        self.interp.xs()
    }

    pub fn vals(&self) -> &[f64] {
        self.interp.ys()
    }
}

/// Potential/stream coordinates of the walls and inlet for one iterate of
/// the boundary speeds. Rebuilt each outer iteration.
pub struct BoundaryMaps {
    pub m: f64,
    pub m_in: f64,
    pub zeta_minus: f64,
    pub zeta_plus: f64,
    pub phi_minus: MonotoneCubic,
    pub x_minus: MonotoneCubic,
    pub phi_plus: MonotoneCubic,
    pub x_plus: MonotoneCubic,
    pub psi_in: MonotoneCubic,
    pub y_in: MonotoneCubic,
    pub q_in: Profile,
    pub q_minus: Profile,
    pub q_plus: Profile,
    spec: NozzleSpec,
}

impl BoundaryMaps {
    /// Assemble all maps by cumulative trapezoid integration of the sampled
    /// speeds. Errors if any cumulative integrand fails to be positive
    /// (corrupted speed samples).
    pub fn build(
        spec: &NozzleSpec,
        gas: &GasModel,
        q_in: Profile,
        q_minus: Profile,
        q_plus: Profile,
    ) -> Result<Self> {
        let fine = 513;
        let fl = spec.inlet_height();

        // stream coordinate along the inlet
        let ys: Vec<f64> = (0..fine).map(|i| fl * i as f64 / (fine - 1) as f64).collect();
        let mut dpsi = Vec::with_capacity(fine);
        for &y in &ys {
            let q = q_in.eval(y);
            let rho = gas.density(q * q).map_err(Error::Gas)?;
            let v = q * rho / spec.theta_in(y).cos();
            if !(v > 0.0) {
                return Err(Error::Geometry(format!(
                    "inlet stream integrand not positive at y = {y}"
                )));
            }
            dpsi.push(v);
        }
        let psi_vals = cumtrapz(&ys, &dpsi);
        let m_in = *psi_vals.last().unwrap();
        let psi_in = MonotoneCubic::new(ys.clone(), psi_vals.clone());
        let y_in = MonotoneCubic::new(psi_vals, ys);

        // potential coordinate along the convergent wall (phi(0) = 0)
        let xs_m: Vec<f64> = (0..fine)
            .map(|i| spec.l_minus * (1.0 - i as f64 / (fine - 1) as f64))
            .collect();
        let mut dphi = Vec::with_capacity(fine);
        for &x in &xs_m {
            let v = q_minus.eval(x) / spec.theta_wall(x).cos();
            if !(v > 0.0) {
                return Err(Error::Geometry(format!(
                    "wall potential integrand not positive at x = {x}"
                )));
            }
            dphi.push(v);
        }
        let mut phi_vals = cumtrapz(&xs_m, &dphi);
        let shift = *phi_vals.last().unwrap();
        for v in phi_vals.iter_mut() {
            *v -= shift;
        }
        let zeta_minus = phi_vals[0];
        let phi_minus = MonotoneCubic::new(xs_m.clone(), phi_vals.clone());
        let x_minus = MonotoneCubic::new(phi_vals, xs_m);

        // potential coordinate along the divergent wall
        let xs_p: Vec<f64> = (0..fine)
            .map(|i| spec.l_plus * i as f64 / (fine - 1) as f64)
            .collect();
        let mut dphi_p = Vec::with_capacity(fine);
        for &x in &xs_p {
            let v = q_plus.eval(x) / spec.theta_wall(x).cos();
            if !(v > 0.0) {
                return Err(Error::Geometry(format!(
                    "wall potential integrand not positive at x = {x}"
                )));
            }
            dphi_p.push(v);
        }
        let phi_p_vals = cumtrapz(&xs_p, &dphi_p);
        let zeta_plus = *phi_p_vals.last().unwrap();
        let phi_plus = MonotoneCubic::new(xs_p.clone(), phi_p_vals.clone());
        let x_plus = MonotoneCubic::new(phi_p_vals, xs_p);

        Ok(BoundaryMaps {
            m: mass_flux(spec, gas),
            m_in,
            zeta_minus,
            zeta_plus,
            phi_minus,
            x_minus,
            phi_plus,
            x_plus,
            psi_in,
            y_in,
            q_in,
            q_minus,
            q_plus,
            spec: spec.clone(),
        })
    }

    /// Inlet Neumann data for the subsonic problem:
    /// dA(q)/dphi at phi = zeta_- as a function of psi. Positive.
    pub fn inlet_data(&self, psi: f64, gas: &GasModel) -> f64 {
        let y = self.y_in.eval(psi.clamp(0.0, self.m_in));
        let q = self.q_in.eval(y);
        let rho = gas
            .density(q * q)
            .expect("inlet speed within Bernoulli domain");
        -self.spec.theta_in_prime(y) * self.spec.theta_in(y).cos() / (q * rho)
    }

    /// Wall Neumann data for the subsonic problem:
    /// dB(q)/dpsi at psi = m_in as a function of phi. Positive.
    pub fn wall_minus_data(&self, phi: f64) -> f64 {
        let x = self.x_minus.eval(phi.clamp(self.zeta_minus, 0.0));
        self.spec.theta_wall_prime(x) * self.spec.theta_wall(x).cos() / self.q_minus.eval(x)
    }

    /// Geometric factor Theta'_+(X_+(phi)) cos Theta_+(X_+(phi)) of the
    /// supersonic wall source.
    pub fn wall_plus_turning(&self, phi: f64) -> f64 {
        let x = self.x_plus.eval(phi.clamp(0.0, self.zeta_plus));
        self.spec.theta_wall_prime(x) * self.spec.theta_wall(x).cos()
    }

    pub fn spec(&self) -> &NozzleSpec {
        &self.spec
    }
}
