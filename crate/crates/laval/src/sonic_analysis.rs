//! Sonic-curve diagnostics on computed or imported potential-plane fields:
//! exceptional-point classification, segment decomposition, characteristic
//! tracing from sonic points, Riemann-invariant conservation along
//! characteristics, and the wall-curvature necessary condition.

use crate::assembly::TransonicSolution;
use crate::gas::GasModel;
use crate::nozzle::WallShape;
use crate::numerics::interp::lerp_clamped;
use crate::supersonic::{trace_characteristic, Family, TraceEnd, TraceOptions, TracedPath};
use crate::{Error, Result};
use ndarray::Array2;

/// Speed samples on a rectilinear potential-plane grid; the import format
/// of `analyze` and the common currency of the diagnostics.
#[derive(Debug, Clone)]
pub struct QGrid {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    /// speed q, indexed [phi][psi]
    pub q: Array2<f64>,
}

impl QGrid {
    pub fn sample(&self, phi: f64, psi: f64) -> f64 {
        let nj = self.psi.len();
        let j_hi = match self.psi.binary_search_by(|v| v.partial_cmp(&psi).unwrap()) {
            Ok(j) => j.max(1),
            Err(j) => j.clamp(1, nj - 1),
        };
        let t = ((psi - self.psi[j_hi - 1]) / (self.psi[j_hi] - self.psi[j_hi - 1]))
            .clamp(0.0, 1.0);
        let row = |j: usize| {
            let col: Vec<f64> = (0..self.phi.len()).map(|i| self.q[[i, j]]).collect();
            lerp_clamped(&self.phi, &col, phi)
        };
        row(j_hi - 1) * (1.0 - t) + row(j_hi) * t
    }

    /// Build from a scalar function, for synthetic fixtures.
    pub fn from_fn<F: Fn(f64, f64) -> f64>(
        phi: Vec<f64>,
        psi: Vec<f64>,
        f: F,
    ) -> QGrid {
        let mut q = Array2::zeros((phi.len(), psi.len()));
        for (i, &p) in phi.iter().enumerate() {
            for (j, &s) in psi.iter().enumerate() {
                q[[i, j]] = f(p, s);
            }
        }
        QGrid { phi, psi, q }
    }
}

/// Sonic-curve segment membership.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    /// exceptional (|q_psi| within tolerance)
    Exceptional,
    /// nonexceptional with q_psi > 0, approaching the upper wall
    Plus,
    /// nonexceptional with q_psi < 0, approaching the lower wall
    Minus,
}

/// One detected sonic point.
#[derive(Debug, Clone)]
pub struct SonicPoint {
    pub phi: f64,
    pub psi: f64,
    pub q_psi: f64,
    pub tol: f64,
    pub segment: Segment,
}

/// Classified sonic set with its segment decomposition.
#[derive(Debug, Clone)]
pub struct SonicDiagnostics {
    /// sonic points ordered by psi
    pub points: Vec<SonicPoint>,
    pub n_exceptional: usize,
    /// order-consistent decomposition: indices of each segment
    pub idx_minus: Vec<usize>,
    pub idx_exceptional: Vec<usize>,
    pub idx_plus: Vec<usize>,
}

impl SonicDiagnostics {
    pub fn all_exceptional(&self) -> bool {
        self.n_exceptional == self.points.len() && !self.points.is_empty()
    }

    /// Segment indices must be contiguous and ordered S- < Se < S+ along
    /// the curve (the structure of Meyer-type sonic curves).
    pub fn order_consistent(&self) -> bool {
        let contiguous = |v: &[usize]| v.windows(2).all(|w| w[1] == w[0] + 1);
        if !(contiguous(&self.idx_minus)
            && contiguous(&self.idx_exceptional)
            && contiguous(&self.idx_plus))
        {
            return false;
        }
        let hi = |v: &[usize]| v.last().copied();
        let lo = |v: &[usize]| v.first().copied();
        if let (Some(a), Some(b)) = (hi(&self.idx_minus), lo(&self.idx_exceptional)) {
            if a >= b {
                return false;
            }
        }
        if let (Some(a), Some(b)) = (hi(&self.idx_exceptional), lo(&self.idx_plus)) {
            if a >= b {
                return false;
            }
        }
        if let (Some(a), Some(b)) = (hi(&self.idx_minus), lo(&self.idx_plus)) {
            if a >= b {
                return false;
            }
        }
        true
    }
}

/// Locate the sonic level set `q = c*` by linear interpolation along each
/// psi-row and classify every point as exceptional iff `|q_psi| <= tol`,
/// where `tol = tol_factor x (local discretization error estimate)`.
pub fn classify_sonic_points(
    field: &QGrid,
    gas: &GasModel,
    tol_factor: f64,
) -> Result<SonicDiagnostics> {
    let c_star = gas.c_star();
    let ni = field.phi.len();
    let nj = field.psi.len();
    if ni < 3 || nj < 3 {
        return Err(Error::Config("field too small for classification".into()));
    }
    let d_psi_of = |i: usize, j: usize| -> f64 {
        if j == 0 {
            (field.q[[i, 1]] - field.q[[i, 0]]) / (field.psi[1] - field.psi[0])
        } else if j == nj - 1 {
            (field.q[[i, nj - 1]] - field.q[[i, nj - 2]])
                / (field.psi[nj - 1] - field.psi[nj - 2])
        } else {
            (field.q[[i, j + 1]] - field.q[[i, j - 1]]) / (field.psi[j + 1] - field.psi[j - 1])
        }
    };
    let mut points = Vec::new();
    for j in 0..nj {
        for i in 0..ni - 1 {
            let a = field.q[[i, j]] - c_star;
            let b = field.q[[i + 1, j]] - c_star;
            if a == 0.0 && i > 0 {
                continue; // crossing handled by the preceding interval
            }
            if a * b <= 0.0 && (a != 0.0 || b != 0.0) {
                let t = if a == b { 0.0 } else { a / (a - b) };
                let phi = field.phi[i] * (1.0 - t) + field.phi[i + 1] * t;
                let q_psi = d_psi_of(i, j) * (1.0 - t) + d_psi_of(i + 1, j) * t;
                // local error estimate of the gradient sampling from second
                // differences
                let h_phi = field.phi[i + 1] - field.phi[i];
                let h_psi = if j == 0 {
                    field.psi[1] - field.psi[0]
                } else {
                    field.psi[j] - field.psi[j - 1]
                };
                let q_pp = if i > 0 && i + 2 < ni {
                    let left = (field.q[[i, j]] - field.q[[i - 1, j]])
                        / (field.phi[i] - field.phi[i - 1]);
                    let right = (field.q[[i + 2, j]] - field.q[[i + 1, j]])
                        / (field.phi[i + 2] - field.phi[i + 1]);
                    (right - left).abs() / (field.phi[i + 1] - field.phi[i])
                } else {
                    0.0
                };
                let q_ss = if j > 0 && j + 1 < nj {
                    ((field.q[[i, j + 1]] - 2.0 * field.q[[i, j]] + field.q[[i, j - 1]])
                        / (h_psi * h_psi))
                        .abs()
                } else {
                    0.0
                };
                let tol = tol_factor * (h_phi * q_pp + h_psi * q_ss) + 1e-12;
                let segment = if q_psi.abs() <= tol {
                    Segment::Exceptional
                } else if q_psi > 0.0 {
                    Segment::Plus
                } else {
                    Segment::Minus
                };
                points.push(SonicPoint {
                    phi,
                    psi: field.psi[j],
                    q_psi,
                    tol,
                    segment,
                });
                break; // one sonic point per row for Meyer-type fields
            }
        }
    }
    if points.is_empty() {
        return Err(Error::Numerics("no sonic level set found".into()));
    }
    let n_exceptional = points
        .iter()
        .filter(|p| p.segment == Segment::Exceptional)
        .count();
    let mut idx_minus = Vec::new();
    let mut idx_exceptional = Vec::new();
    let mut idx_plus = Vec::new();
    for (k, p) in points.iter().enumerate() {
        match p.segment {
            Segment::Minus => idx_minus.push(k),
            Segment::Exceptional => idx_exceptional.push(k),
            Segment::Plus => idx_plus.push(k),
        }
    }
    Ok(SonicDiagnostics {
        points,
        n_exceptional,
        idx_minus,
        idx_exceptional,
        idx_plus,
    })
}

/// Per-path Riemann-invariant drift.
#[derive(Debug, Clone)]
pub struct DriftReport {
    /// per path: (max |I - I0|, dynamic range of H along the path)
    pub paths: Vec<(f64, f64)>,
    /// max over paths of drift relative to the H range
    pub max_relative: f64,
}

/// Trace characteristics through the supersonic region of a connected
/// solution and report the drift of `theta -+ H(q)` along each. Paths stop
/// at the stated sonic margin.
pub fn riemann_invariant_drift(
    sol: &TransonicSolution,
    gas: &GasModel,
    starts: &[(f64, f64)],
    family: Family,
    q_big_margin: f64,
) -> Result<DriftReport> {
    let sup = &sol.sup;
    let q_of = |p: f64, s: f64| sup.sample_q_big(p, s);
    let theta_grid = QGrid {
        phi: sup.phi.clone(),
        psi: sup.psi.clone(),
        q: sol.theta_plus.clone(),
    };
    let q_grid = QGrid {
        phi: sup.phi.clone(),
        psi: sup.psi.clone(),
        q: sol.q_plus.clone(),
    };
    let sign = match family {
        Family::Plus => -1.0,
        Family::Minus => 1.0,
    };
    let mut paths = Vec::new();
    let mut max_rel = 0.0f64;
    for &start in starts {
        let path = trace_characteristic(
            &q_of,
            gas,
            start,
            family,
            sup.m,
            &TraceOptions {
                reflect: false,
                stop_phi: sup.eps_cut * 2.0,
                q_margin: Some(q_big_margin),
                forward: false,
                max_steps: 4_000_000,
            },
        )?;
        let invariant = |p: f64, s: f64| -> Result<f64> {
            let th = theta_grid.sample(p, s);
            let q = q_grid.sample(p, s).max(gas.c_star());
            Ok(th + sign * gas.h(q).map_err(Error::Gas)?)
        };
        let i0 = invariant(path.points[0].0, path.points[0].1)?;
        let h0 = gas
            .h(q_grid
                .sample(path.points[0].0, path.points[0].1)
                .max(gas.c_star()))
            .map_err(Error::Gas)?;
        let mut drift = 0.0f64;
        let mut h_range = 0.0f64;
        for &(p, s) in path.points.iter() {
            drift = drift.max((invariant(p, s)? - i0).abs());
            let h = gas
                .h(q_grid.sample(p, s).max(gas.c_star()))
                .map_err(Error::Gas)?;
            h_range = h_range.max((h - h0).abs());
        }
        max_rel = max_rel.max(drift / h_range.max(1e-300));
        paths.push((drift, h_range));
    }
    Ok(DriftReport {
        paths,
        max_relative: max_rel,
    })
}

/// Outcome of the wall-curvature necessary condition.
#[derive(Debug, Clone)]
pub struct CurvatureReport {
    /// the check is vacuous when no nonexceptional upper segment exists
    pub s_plus_empty: bool,
    /// wall abscissa of the sonic point nearest the upper wall
    pub x1: Option<f64>,
    /// endpoint abscissa of the extremal negative characteristic
    pub x_star: Option<f64>,
    pub f2_min_on_footprint: Option<f64>,
    pub passed: bool,
}

/// Check `f'' > 0` on the wall footprint `[x1, x*]` of the negative
/// characteristics emanating from the nonexceptional upper segment. For an
/// all-exceptional sonic line the check degenerates to reporting that fact.
pub fn wall_curvature_check(
    wall: &dyn WallShape,
    diag: &SonicDiagnostics,
    q_big: &dyn Fn(f64, f64) -> f64,
    x_of_phi: &dyn Fn(f64) -> f64,
    gas: &GasModel,
    m: f64,
    phi_max: f64,
) -> Result<CurvatureReport> {
    if diag.idx_plus.is_empty() {
        return Ok(CurvatureReport {
            s_plus_empty: true,
            x1: None,
            x_star: None,
            f2_min_on_footprint: None,
            passed: true,
        });
    }
    // negative characteristics from sampled S+ points climb to the upper
    // wall with phi decreasing; x* is the supremum of their wall abscissae
    let mut x_star = f64::NEG_INFINITY;
    for &k in diag.idx_plus.iter() {
        let p = &diag.points[k];
        let start = (p.phi + 1e-4 * phi_max, (p.psi).min(m * (1.0 - 1e-9)));
        let path = trace_characteristic(
            q_big,
            gas,
            start,
            Family::Minus,
            m,
            &TraceOptions {
                reflect: false,
                stop_phi: 0.0,
                q_margin: None,
                forward: false,
                max_steps: 2_000_000,
            },
        )?;
        if let TraceEnd::WallHit { at_top: true } = path.end {
            x_star = x_star.max(x_of_phi(path.points.last().unwrap().0));
        }
    }
    let top = diag
        .points
        .iter()
        .max_by(|a, b| a.psi.partial_cmp(&b.psi).unwrap())
        .unwrap();
    let x1 = x_of_phi(top.phi);
    if !x_star.is_finite() {
        return Ok(CurvatureReport {
            s_plus_empty: false,
            x1: Some(x1),
            x_star: None,
            f2_min_on_footprint: None,
            passed: false,
        });
    }
    let (lo, hi) = (x1.min(x_star), x1.max(x_star));
    let mut f2_min = f64::INFINITY;
    for k in 0..=50 {
        let x = lo + (hi - lo) * k as f64 / 50.0;
        f2_min = f2_min.min(wall.f2(x));
    }
    Ok(CurvatureReport {
        s_plus_empty: false,
        x1: Some(x1),
        x_star: Some(x_star),
        f2_min_on_footprint: Some(f2_min),
        passed: f2_min > 0.0,
    })
}

/// Result of probing the characteristics from one sonic point.
#[derive(Debug)]
pub enum CharFromSonic {
    /// exceptional point: the Osgood bound `beta <= M (phi - phi0)` holds,
    /// so both characteristics coincide with the sonic line
    Coincident { osgood_m: f64 },
    /// nonexceptional point: the two distinct traced characteristics
    Distinct {
        plus: TracedPath,
        minus: TracedPath,
    },
}

/// For an exceptional sonic point, verify the Osgood-type bound that pins
/// every characteristic to the sonic line; for a nonexceptional point,
/// trace and return the two distinct characteristics.
pub fn characteristics_from_sonic(
    point: &SonicPoint,
    q_big: &dyn Fn(f64, f64) -> f64,
    gas: &GasModel,
    m: f64,
    probe: f64,
) -> Result<CharFromSonic> {
    if point.segment == Segment::Exceptional {
        // beta(phi0 + d) / d must stay bounded as d -> 0
        let beta_at = |d: f64| -> Result<f64> {
            let q = q_big(point.phi + d, point.psi).min(0.0);
            if q >= 0.0 {
                return Ok(0.0);
            }
            let dd = gas.a_inv_sup_delta(q).map_err(Error::Gas)?;
            Ok(1.0 / gas.wave_b_delta(dd).sqrt())
        };
        let mut m_hat = 0.0f64;
        let mut prev_ratio: Option<f64> = None;
        let mut bounded = true;
        for k in 0..8 {
            let d = probe * 0.5f64.powi(k);
            let ratio = beta_at(d)? / d;
            m_hat = m_hat.max(ratio);
            if let Some(pr) = prev_ratio {
                if ratio > 4.0 * pr.max(1e-14) && ratio > 1e-6 {
                    bounded = false;
                }
            }
            prev_ratio = Some(ratio);
        }
        if !bounded {
            return Err(Error::Numerics(
                "Osgood ratio blows up at an exceptional point: classification mismatch".into(),
            ));
        }
        Ok(CharFromSonic::Coincident { osgood_m: m_hat })
    } else {
        let start = (point.phi + probe, point.psi.clamp(1e-12, m * (1.0 - 1e-12)));
        let opts = TraceOptions {
            reflect: false,
            stop_phi: point.phi + 20.0 * probe,
            q_margin: None,
            forward: true,
            max_steps: 200_000,
        };
        let plus = trace_characteristic(q_big, gas, start, Family::Plus, m, &opts)?;
        let minus = trace_characteristic(q_big, gas, start, Family::Minus, m, &opts)?;
        Ok(CharFromSonic::Distinct { plus, minus })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gas() -> &'static GasModel {
        crate::test_gas()
    }

    fn lin_grid() -> (Vec<f64>, Vec<f64>) {
        let phi: Vec<f64> = (0..65).map(|i| -0.3 + 0.6 * i as f64 / 64.0).collect();
        let psi: Vec<f64> = (0..33).map(|j| 0.5 * j as f64 / 32.0).collect();
        (phi, psi)
    }

    #[test]
    fn tilted_linear_field_all_nonexceptional() {
        let g = gas();
        let (phi, psi) = lin_grid();
        // q = c* + alpha phi + beta psi with beta != 0: sonic line
        // psi = -alpha phi / beta, all points nonexceptional
        let f = QGrid::from_fn(phi, psi, |p, s| g.c_star() + 0.3 * p + 0.2 * (s - 0.25));
        let diag = classify_sonic_points(&f, g, 5.0).unwrap();
        assert!(!diag.points.is_empty());
        assert_eq!(diag.n_exceptional, 0);
        for p in &diag.points {
            assert!((p.q_psi - 0.2).abs() < 1e-9);
        }
    }

    #[test]
    fn straight_sonic_line_all_exceptional() {
        let g = gas();
        let (phi, psi) = lin_grid();
        let f = QGrid::from_fn(phi, psi, |p, _| g.c_star() + 0.3 * p);
        let diag = classify_sonic_points(&f, g, 5.0).unwrap();
        assert!(diag.all_exceptional());
        for p in &diag.points {
            assert!(p.phi.abs() < 1e-12);
        }
    }

    #[test]
    fn taylor_type_fixture_zero_exceptional() {
        let g = gas();
        let (phi, psi) = lin_grid();
        // q_psi bounded away from zero on the oscillating sonic set
        let f = QGrid::from_fn(phi, psi, |p, s| {
            g.c_star() + 0.25 * (s - 0.25) + 0.05 * (12.0 * p).cos()
        });
        let diag = classify_sonic_points(&f, g, 5.0).unwrap();
        assert_eq!(diag.n_exceptional, 0);
    }

    #[test]
    fn segment_decomposition_is_order_consistent() {
        let g = gas();
        let (phi, psi) = lin_grid();
        // sonic curve phi = S1(psi) with S1' > 0 low (S-), flat middle (Se),
        // S1' < 0 high (S+); q_psi sign follows -a S1'
        let s1 = |s: f64| {
            if s < 0.15 {
                0.08 * (0.15 - s)
            } else if s <= 0.35 {
                0.0
            } else {
                0.08 * (0.35 - s)
            }
        };
        let f = QGrid::from_fn(phi, psi, move |p, s| g.c_star() + 0.5 * (p - s1(s)));
        let diag = classify_sonic_points(&f, g, 5.0).unwrap();
        assert!(!diag.idx_minus.is_empty());
        assert!(!diag.idx_exceptional.is_empty());
        assert!(!diag.idx_plus.is_empty());
        assert!(diag.order_consistent());
    }

    #[test]
    fn coincidence_at_exceptional_points_of_power_law_field() {
        let g = gas();
        // Q = -phi^5: beta ~ phi^{5/4} <= M phi near any sonic point at
        // phi=0 on a line... probe the Osgood ratio at the origin point
        let q_big = |p: f64, _s: f64| if p <= 0.0 { 0.0 } else { -(p.powi(5)) };
        let point = SonicPoint {
            phi: 0.0,
            psi: 0.25,
            q_psi: 0.0,
            tol: 1e-9,
            segment: Segment::Exceptional,
        };
        match characteristics_from_sonic(&point, &q_big, g, 0.5, 1e-2).unwrap() {
            CharFromSonic::Coincident { osgood_m } => {
                assert!(osgood_m.is_finite());
            }
            _ => panic!("expected coincidence"),
        }
        // degenerate uniform-sonic field: beta = 0, M = 0
        let q0 = |_p: f64, _s: f64| 0.0;
        match characteristics_from_sonic(&point, &q0, g, 0.5, 1e-2).unwrap() {
            CharFromSonic::Coincident { osgood_m } => assert_eq!(osgood_m, 0.0),
            _ => panic!("expected coincidence"),
        }
    }

    #[test]
    fn nonexceptional_point_has_two_distinct_characteristics() {
        let g = gas();
        // tilted sonic curve: supersonic right of phi = 0.1(psi - 0.25)
        let q_big = move |p: f64, s: f64| {
            let edge = 0.1 * (s - 0.25);
            let d = p - edge;
            if d <= 0.0 {
                0.0
            } else {
                -(d * d)
            }
        };
        let point = SonicPoint {
            phi: 0.0,
            psi: 0.25,
            q_psi: 0.1,
            tol: 1e-9,
            segment: Segment::Plus,
        };
        match characteristics_from_sonic(&point, &q_big, g, 0.5, 1e-3).unwrap() {
            CharFromSonic::Distinct { plus, minus } => {
                let pe = plus.points.last().unwrap();
                let me = minus.points.last().unwrap();
                assert!(
                    (pe.1 - me.1).abs() > 1e-6,
                    "paths must separate: {pe:?} vs {me:?}"
                );
            }
            _ => panic!("expected two distinct characteristics"),
        }
    }

    #[test]
    fn curvature_check_vacuous_for_exceptional_line() {
        let g = gas();
        let (phi, psi) = lin_grid();
        let f = QGrid::from_fn(phi, psi, |p, _| g.c_star() + 0.3 * p);
        let diag = classify_sonic_points(&f, g, 5.0).unwrap();
        let wall = crate::nozzle::PowerLawWall {
            f0: 1.0,
            delta: 0.1,
            lambda_minus: 3.0,
            lambda_plus: 3.0,
        };
        let q_big = |_p: f64, _s: f64| -1e-3;
        let rep =
            wall_curvature_check(&wall, &diag, &q_big, &|p| p, g, 0.5, 0.3).unwrap();
        assert!(rep.s_plus_empty);
        assert!(rep.passed);
    }

    #[test]
    fn curvature_check_on_tilted_fixture() {
        let g = gas();
        // synthetic Meyer field with a nonexceptional upper segment: sonic
        // curve bends left near the top wall
        let m = 0.4;
        let bend = move |s: f64| -0.5 * ((s - 0.25).max(0.0)).powi(2);
        let q_big = move |p: f64, s: f64| {
            let d = p - bend(s);
            if d <= 0.0 {
                0.0
            } else {
                -(d * d) * 0.2
            }
        };
        let phi: Vec<f64> = (0..129).map(|i| -0.05 + 0.35 * i as f64 / 128.0).collect();
        let psi: Vec<f64> = (0..65).map(|j| m * j as f64 / 64.0).collect();
        let qgrid = QGrid::from_fn(phi, psi, move |p, s| {
            g.c_star() + g.a_inv_sup_delta(q_big(p, s).min(0.0)).unwrap_or(0.0)
        });
        let diag = classify_sonic_points(&qgrid, g, 5.0).unwrap();
        assert!(
            !diag.idx_plus.is_empty(),
            "fixture must produce a nonexceptional upper segment"
        );
        let wall = crate::nozzle::PowerLawWall {
            f0: 1.0,
            delta: 0.1,
            lambda_minus: 3.0,
            lambda_plus: 3.0,
        };
        // footprint abscissae mapped through a sonic-scale stretch; the
        // default wall has f'' = delta x^lambda > 0 for x > 0, and the
        // footprint here sits left of the throat where f'' > 0 as well
        let rep = wall_curvature_check(
            &wall,
            &diag,
            &q_big,
            &|p| p / g.c_star(),
            g,
            m,
            0.3,
        )
        .unwrap();
        assert!(!rep.s_plus_empty);
        assert!(rep.x_star.is_some());
    }
}
