//! Joins the converged subsonic and supersonic fields into a single
//! transonic solution, rebuilds the flow angle from the Chaplygin gradient
//! (`theta_psi = -A'(q) q_phi`, `theta_phi = B'(q) q_psi`) and maps the
//! solution back to the physical plane.
//!
//! The two sides keep their own graded grids and share only the sonic line
//! `phi = 0`; nothing is re-interpolated onto a common grid.

use crate::gas::GasModel;
use crate::subsonic::SubsonicField;
use crate::supersonic::SupersonicField;
use crate::{Error, Result};
use ndarray::Array2;

/// One-sided derivative gaps measured across the sonic line.
#[derive(Debug, Clone)]
pub struct MatchingReport {
    /// |q_phi(0-) - q_phi(0+)| maximized over psi
    pub max_qphi_gap: f64,
    /// one-sided q_phi magnitudes at the sonic-adjacent stations
    pub max_qphi_minus: f64,
    pub max_qphi_plus: f64,
    /// max |q_psi| at the sonic-adjacent stations of both sides
    pub max_qpsi_adjacent: f64,
    /// relative mass-flux mismatch of the two sides
    pub flux_mismatch: f64,
}

/// Discrepancy between the two quadrature routes for theta (a discrete curl
/// residual in integral form), per side.
#[derive(Debug, Clone, Default)]
pub struct CurlReport {
    pub minus: f64,
    pub plus: f64,
}

/// Connected transonic field on `[zeta_-, zeta_+] x [0, m]`.
pub struct TransonicSolution {
    pub sub: SubsonicField,
    pub sup: SupersonicField,
    /// physical speed on the supersonic grid, `A_+^{-1}(Q)`
    pub q_plus: Array2<f64>,
    pub theta_minus: Array2<f64>,
    pub theta_plus: Array2<f64>,
    pub x_minus: Array2<f64>,
    pub y_minus: Array2<f64>,
    pub x_plus: Array2<f64>,
    pub y_plus: Array2<f64>,
    pub matching: MatchingReport,
    pub curl: CurlReport,
    pub m: f64,
}

/// Join the two converged sides. Preconditions: equal psi resolutions and
/// mass fluxes agreeing to the stated tolerance.
pub fn connect(
    sub: SubsonicField,
    sup: SupersonicField,
    gas: &GasModel,
) -> Result<TransonicSolution> {
    if sub.psi.len() != sup.psi.len() {
        return Err(Error::Config(format!(
            "psi resolutions differ: {} vs {}",
            sub.psi.len(),
            sup.psi.len()
        )));
    }
    let flux_mismatch = (sub.m_in - sup.m).abs() / sup.m;
    if flux_mismatch > 1e-6 {
        return Err(Error::Divergence(format!(
            "mass-flux mismatch between the sides: {flux_mismatch:.3e} relative"
        )));
    }
    let (ni_p, nj) = sup.q_big.dim();
    let mut q_plus = Array2::zeros((ni_p, nj));
    for i in 0..ni_p {
        for j in 0..nj {
            q_plus[[i, j]] = gas.c_star()
                + gas
                    .a_inv_sup_delta(sup.q_big[[i, j]].min(0.0))
                    .map_err(Error::Gas)?;
        }
    }

    // one-sided derivative gaps at the sonic line
    let ni_m = sub.phi.len();
    let h_m = sub.phi[ni_m - 1] - sub.phi[ni_m - 2];
    let h_p = sup.phi[1] - sup.phi[0];
    let mut max_gap = 0.0f64;
    let mut max_m = 0.0f64;
    let mut max_p = 0.0f64;
    for j in 0..nj {
        let d_minus = (sub.q[[ni_m - 1, j]] - sub.q[[ni_m - 2, j]]) / h_m;
        let d_plus = (q_plus[[1, j]] - q_plus[[0, j]]) / h_p;
        max_gap = max_gap.max((d_minus - d_plus).abs());
        max_m = max_m.max(d_minus.abs());
        max_p = max_p.max(d_plus.abs());
    }
    // transverse derivative at the sonic-adjacent stations
    let d_psi = sub.psi[1] - sub.psi[0];
    let mut max_qpsi = 0.0f64;
    for j in 1..nj - 1 {
        let qm = (sub.q[[ni_m - 2, j + 1]] - sub.q[[ni_m - 2, j - 1]]) / (2.0 * d_psi);
        let qp = (q_plus[[1, j + 1]] - q_plus[[1, j - 1]]) / (2.0 * d_psi);
        max_qpsi = max_qpsi.max(qm.abs()).max(qp.abs());
    }

    let matching = MatchingReport {
        max_qphi_gap: max_gap,
        max_qphi_minus: max_m,
        max_qphi_plus: max_p,
        max_qpsi_adjacent: max_qpsi,
        flux_mismatch,
    };
    let m = sup.m;
    Ok(TransonicSolution {
        q_plus,
        theta_minus: Array2::zeros((ni_m, nj)),
        theta_plus: Array2::zeros((ni_p, nj)),
        x_minus: Array2::zeros((ni_m, nj)),
        y_minus: Array2::zeros((ni_m, nj)),
        x_plus: Array2::zeros((ni_p, nj)),
        y_plus: Array2::zeros((ni_p, nj)),
        matching,
        curl: CurlReport::default(),
        m,
        sub,
        sup,
    })
}

/// Transverse derivative of a field row by central differences, one-sided
/// second order at the walls.
fn d_psi_of(arr: &Array2<f64>, i: usize, j: usize, d_psi: f64) -> f64 {
    let nj = arr.dim().1;
    if j == 0 {
        (-3.0 * arr[[i, 0]] + 4.0 * arr[[i, 1]] - arr[[i, 2]]) / (2.0 * d_psi)
    } else if j == nj - 1 {
        (3.0 * arr[[i, nj - 1]] - 4.0 * arr[[i, nj - 2]] + arr[[i, nj - 3]]) / (2.0 * d_psi)
    } else {
        (arr[[i, j + 1]] - arr[[i, j - 1]]) / (2.0 * d_psi)
    }
}

impl TransonicSolution {
    /// Rebuild the flow angle by quadrature of the Chaplygin gradient from
    /// `theta = 0` on the sonic line. The discrepancy against the
    /// psi-quadrature route is recorded as the curl residual.
    pub fn reconstruct_theta(mut self, gas: &GasModel) -> Result<Self> {
        let nj = self.sub.psi.len();
        let d_psi = self.sub.psi[1] - self.sub.psi[0];

        // subsonic side: theta_phi = B'(q) q_psi, integrated from phi = 0
        let ni = self.sub.phi.len();
        let mut integrand = Array2::zeros((ni, nj));
        for i in 0..ni {
            for j in 0..nj {
                let q = self.sub.q[[i, j]];
                integrand[[i, j]] = gas.b_prime_raw(q) * d_psi_of(&self.sub.q, i, j, d_psi);
            }
        }
        for j in 0..nj {
            self.theta_minus[[ni - 1, j]] = 0.0;
            for i in (0..ni - 1).rev() {
                let h = self.sub.phi[i + 1] - self.sub.phi[i];
                self.theta_minus[[i, j]] = self.theta_minus[[i + 1, j]]
                    - 0.5 * h * (integrand[[i, j]] + integrand[[i + 1, j]]);
            }
        }
        // curl monitor: the psi-route theta~ = -int A'(q) q_phi dpsi from the
        // axis; report the max discrepancy
        let mut curl_minus = 0.0f64;
        {
            let mut qphi = Array2::zeros((ni, nj));
            for j in 0..nj {
                for i in 0..ni {
                    let (hm, hp, im, ip) = if i == 0 {
                        (0.0, self.sub.phi[1] - self.sub.phi[0], 0, 1)
                    } else if i == ni - 1 {
                        (self.sub.phi[ni - 1] - self.sub.phi[ni - 2], 0.0, ni - 2, ni - 1)
                    } else {
                        (
                            self.sub.phi[i] - self.sub.phi[i - 1],
                            self.sub.phi[i + 1] - self.sub.phi[i],
                            i - 1,
                            i + 1,
                        )
                    };
                    qphi[[i, j]] =
                        (self.sub.q[[ip, j]] - self.sub.q[[im, j]]) / (hm + hp).max(1e-300);
                }
            }
            for i in 0..ni {
                let mut acc = 0.0;
                let mut prev = -gas.a_prime_raw(self.sub.q[[i, 0]]) * qphi[[i, 0]];
                for j in 1..nj {
                    let cur = -gas.a_prime_raw(self.sub.q[[i, j]]) * qphi[[i, j]];
                    acc += 0.5 * d_psi * (cur + prev);
                    prev = cur;
                    curl_minus = curl_minus.max((acc - self.theta_minus[[i, j]]).abs());
                }
            }
        }

        // supersonic side: theta_phi = sqrt(b) (W + Z)/2, integrated from 0
        let ni_p = self.sup.phi.len();
        let mut integrand_p = Array2::zeros((ni_p, nj));
        for i in 1..ni_p {
            for j in 0..nj {
                let qv = self.sup.q_big[[i, j]].min(0.0);
                if qv < 0.0 {
                    let d = gas.a_inv_sup_delta(qv).map_err(Error::Gas)?;
                    let sqrt_b = gas.wave_b_delta(d).sqrt();
                    integrand_p[[i, j]] =
                        0.5 * sqrt_b * (self.sup.w[[i, j]] + self.sup.z[[i, j]]);
                }
            }
        }
        for j in 0..nj {
            self.theta_plus[[0, j]] = 0.0;
            for i in 1..ni_p {
                let h = self.sup.phi[i] - self.sup.phi[i - 1];
                self.theta_plus[[i, j]] = self.theta_plus[[i - 1, j]]
                    + 0.5 * h * (integrand_p[[i, j]] + integrand_p[[i - 1, j]]);
            }
        }
        // curl monitor on the supersonic side: psi-route with
        // theta_psi = -A'(q) q_phi = -Q_phi
        let mut curl_plus = 0.0f64;
        for i in 0..ni_p {
            let mut acc = 0.0;
            let mut prev = -self.sup.q_phi[[i, 0]];
            for j in 1..nj {
                let cur = -self.sup.q_phi[[i, j]];
                acc += 0.5 * d_psi * (cur + prev);
                prev = cur;
                curl_plus = curl_plus.max((acc - self.theta_plus[[i, j]]).abs());
            }
        }

        self.curl = CurlReport {
            minus: curl_minus,
            plus: curl_plus,
        };
        Ok(self)
    }

    /// Map to the physical plane by quadrature of `x_phi = cos(theta)/q`,
    /// `y_phi = sin(theta)/q` along streamlines, anchored on the sonic line
    /// (which maps to the vertical throat segment x = 0).
    pub fn to_physical(mut self, gas: &GasModel) -> Result<Self> {
        let c_star = gas.c_star();
        let rho_star = gas.density(c_star * c_star).map_err(Error::Gas)?;
        let nj = self.sub.psi.len();
        // sonic line: x = 0, y = psi / (rho* c*)
        let y0: Vec<f64> = self
            .sub
            .psi
            .iter()
            .map(|&p| p / (rho_star * c_star))
            .collect();

        let ni = self.sub.phi.len();
        for j in 0..nj {
            self.x_minus[[ni - 1, j]] = 0.0;
            self.y_minus[[ni - 1, j]] = y0[j];
            for i in (0..ni - 1).rev() {
                let h = self.sub.phi[i + 1] - self.sub.phi[i];
                let g = |ii: usize| {
                    let q = self.sub.q[[ii, j]];
                    let th = self.theta_minus[[ii, j]];
                    (th.cos() / q, th.sin() / q)
                };
                let (xc0, ys0) = g(i);
                let (xc1, ys1) = g(i + 1);
                self.x_minus[[i, j]] = self.x_minus[[i + 1, j]] - 0.5 * h * (xc0 + xc1);
                self.y_minus[[i, j]] = self.y_minus[[i + 1, j]] - 0.5 * h * (ys0 + ys1);
            }
        }
        let ni_p = self.sup.phi.len();
        for j in 0..nj {
            self.x_plus[[0, j]] = 0.0;
            self.y_plus[[0, j]] = y0[j];
            for i in 1..ni_p {
                let h = self.sup.phi[i] - self.sup.phi[i - 1];
                let g = |ii: usize| {
                    let q = self.q_plus[[ii, j]];
                    let th = self.theta_plus[[ii, j]];
                    (th.cos() / q, th.sin() / q)
                };
                let (xc0, ys0) = g(i - 1);
                let (xc1, ys1) = g(i);
                self.x_plus[[i, j]] = self.x_plus[[i - 1, j]] + 0.5 * h * (xc0 + xc1);
                self.y_plus[[i, j]] = self.y_plus[[i - 1, j]] + 0.5 * h * (ys0 + ys1);
            }
        }
        Ok(self)
    }

    /// Largest wall-image deviation |y - f(x)| along psi = m, relative to
    /// the throat half-height.
    pub fn wall_image_deviation(&self, wall: &dyn crate::nozzle::WallShape) -> f64 {
        let nj = self.sub.psi.len();
        let f0 = wall.f(0.0);
        let mut worst = 0.0f64;
        for i in 0..self.sub.phi.len() {
            let (x, y) = (self.x_minus[[i, nj - 1]], self.y_minus[[i, nj - 1]]);
            worst = worst.max((y - wall.f(x)).abs() / f0);
        }
        for i in 0..self.sup.phi.len() {
            let (x, y) = (self.x_plus[[i, nj - 1]], self.y_plus[[i, nj - 1]]);
            worst = worst.max((y - wall.f(x)).abs() / f0);
        }
        worst
    }

    /// Mass flux through the vertical station x = x_s by quadrature of
    /// rho q cos(theta) dy along the crossing points of each streamline.
    pub fn station_flux(&self, gas: &GasModel, x_s: f64) -> Result<f64> {
        let nj = self.sub.psi.len();
        let minus_side = x_s <= 0.0;
        let (x, y, q, th, n) = if minus_side {
            (
                &self.x_minus,
                &self.y_minus,
                &self.sub.q,
                &self.theta_minus,
                self.sub.phi.len(),
            )
        } else {
            (
                &self.x_plus,
                &self.y_plus,
                &self.q_plus,
                &self.theta_plus,
                self.sup.phi.len(),
            )
        };
        let mut ys = Vec::with_capacity(nj);
        let mut f = Vec::with_capacity(nj);
        for j in 0..nj {
            // x is monotone along each streamline; find the crossing
            let mut found = None;
            for i in 0..n - 1 {
                let (a, b) = (x[[i, j]], x[[i + 1, j]]);
                if (a - x_s) * (b - x_s) <= 0.0 && a != b {
                    let t = (x_s - a) / (b - a);
                    let yv = y[[i, j]] * (1.0 - t) + y[[i + 1, j]] * t;
                    let qv = q[[i, j]] * (1.0 - t) + q[[i + 1, j]] * t;
                    let tv = th[[i, j]] * (1.0 - t) + th[[i + 1, j]] * t;
                    found = Some((yv, qv, tv));
                    break;
                }
            }
            let (yv, qv, tv) = found.ok_or_else(|| {
                Error::Numerics(format!("station x = {x_s} not crossed by streamline {j}"))
            })?;
            ys.push(yv);
            f.push(gas.density(qv * qv).map_err(Error::Gas)? * qv * tv.cos());
        }
        let mut acc = 0.0;
        for j in 1..nj {
            acc += 0.5 * (f[j] + f[j - 1]) * (ys[j] - ys[j - 1]);
        }
        Ok(acc)
    }

    /// Jacobian positivity rho q^2 > 0 over both sides.
    pub fn jacobian_positive(&self, gas: &GasModel) -> bool {
        let ok = |q: f64| {
            q > 0.0
                && q < gas.q_max()
                && gas.density(q * q).map(|r| r * q * q > 0.0).unwrap_or(false)
        };
        self.sub.q.iter().all(|&q| ok(q)) && self.q_plus.iter().all(|&q| ok(q))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nozzle::{NozzleSpec, Profile};
    use crate::subsonic::{self, SubsonicConfig};
    use crate::supersonic::{self, SupersonicConfig};

    fn gas() -> &'static GasModel {
        crate::test_gas()
    }

    fn straight_solution() -> TransonicSolution {
        let g = gas();
        let spec = NozzleSpec::straight_channel(-0.3, 0.3, 1.0).unwrap();
        let sub_cfg = SubsonicConfig {
            n_phi: 24,
            n_psi: 8,
            ..Default::default()
        };
        let sup_cfg = SupersonicConfig {
            n_phi: 32,
            n_psi: 8,
            ..Default::default()
        };
        let sub = subsonic::outer_fixed_point(&spec, g, &sub_cfg, None).unwrap();
        let sup = supersonic::outer_fixed_point(&spec, g, &sup_cfg, None).unwrap();
        connect(sub.field, sup.field, g)
            .unwrap()
            .reconstruct_theta(g)
            .unwrap()
            .to_physical(g)
            .unwrap()
    }

    #[test]
    fn straight_channel_uniform_sonic_map() {
        let g = gas();
        let sol = straight_solution();
        let c = g.c_star();
        // uniform sonic solution, zero gaps
        assert!(sol.matching.max_qphi_gap < 1e-10);
        for v in sol.q_plus.iter() {
            assert!((v - c).abs() < 1e-10);
        }
        for v in sol.theta_minus.iter().chain(sol.theta_plus.iter()) {
            assert!(v.abs() < 1e-12);
        }
        // identity-like physical map: x = phi/c*, y = psi/(rho* c*)
        let rho_star = g.density(c * c).unwrap();
        for (i, &phi) in sol.sub.phi.iter().enumerate() {
            for (j, &psi) in sol.sub.psi.iter().enumerate() {
                assert!((sol.x_minus[[i, j]] - phi / c).abs() < 1e-9);
                assert!((sol.y_minus[[i, j]] - psi / (rho_star * c)).abs() < 1e-9);
            }
        }
        assert!(sol.jacobian_positive(g));
    }

    #[test]
    fn straight_channel_station_flux_is_m() {
        let g = gas();
        let sol = straight_solution();
        for xs in [-0.2, -0.05, 0.1, 0.25] {
            let f = sol.station_flux(g, xs).unwrap();
            assert!(
                (f - sol.m).abs() / sol.m < 1e-9,
                "station {xs}: {f} vs {}",
                sol.m
            );
        }
    }

    #[test]
    fn mismatched_psi_grids_rejected() {
        let g = gas();
        let spec = NozzleSpec::straight_channel(-0.3, 0.3, 1.0).unwrap();
        let sub = subsonic::outer_fixed_point(
            &spec,
            g,
            &SubsonicConfig {
                n_phi: 24,
                n_psi: 8,
                ..Default::default()
            },
            None,
        )
        .unwrap();
        let sup = supersonic::outer_fixed_point(
            &spec,
            g,
            &SupersonicConfig {
                n_phi: 32,
                n_psi: 12,
                ..Default::default()
            },
            None,
        )
        .unwrap();
        assert!(connect(sub.field, sup.field, g).is_err());
    }

    #[test]
    fn psi_independent_field_has_zero_theta_off_wall() {
        // q independent of psi gives theta_phi = 0; for the flat fixture
        // theta vanishes identically
        let sol = straight_solution();
        for v in sol.theta_minus.iter() {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn flux_mismatch_is_rejected() {
        let g = gas();
        let spec = NozzleSpec::straight_channel(-0.3, 0.3, 1.0).unwrap();
        let sub_cfg = SubsonicConfig {
            n_phi: 24,
            n_psi: 8,
            ..Default::default()
        };
        let sup_cfg = SupersonicConfig {
            n_phi: 32,
            n_psi: 8,
            ..Default::default()
        };
        let sub = subsonic::outer_fixed_point(&spec, g, &sub_cfg, None).unwrap();
        let sup = supersonic::outer_fixed_point(&spec, g, &sup_cfg, None).unwrap();
        let mut sub_field = sub.field;
        sub_field.m_in *= 1.001;
        assert!(connect(sub_field, sup.field, g).is_err());
    }

    // fixture with a tilted synthetic supersonic region for the wall trace
    #[test]
    fn wall_trace_matches_geometry_for_straight() {
        let sol = straight_solution();
        // flat wall: theta on the wall must vanish
        let nj = sol.sub.psi.len();
        for i in 0..sol.sup.phi.len() {
            assert!(sol.theta_plus[[i, nj - 1]].abs() < 1e-12);
        }
    }
}
