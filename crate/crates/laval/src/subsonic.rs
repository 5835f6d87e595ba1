//! Subsonic-sonic solver on the convergent side `[zeta_-, 0] x [0, m]`.
//!
//! The conserved form `(A(q))_phiphi + (B(q))_psipsi = 0` is discretized on
//! the transformed unknown `u = B(q)`, for which the equation reads
//! `(E(u))_phiphi + u_psipsi = 0` with `E` increasing and degenerate at the
//! sonic value `u = 0`. Every nodal equation is strictly monotone in the
//! unknown, so nonlinear SOR sweeps with a safeguarded Newton scalar solve
//! preserve the discrete comparison principle.
//!
//! The sonic outlet value is reached by continuation `c -> c*` and the
//! nonlocal inlet/wall data are lagged one outer iteration.

use crate::gas::GasModel;
use crate::nozzle::{BoundaryMaps, NozzleSpec, Profile};
use crate::numerics::grid;
use crate::numerics::interp::lerp_clamped;
use crate::{Error, Result};
use ndarray::Array2;

/// Grid and iteration controls for the convergent side.
#[derive(Debug, Clone)]
pub struct SubsonicConfig {
    pub n_phi: usize,
    pub n_psi: usize,
    pub grading_ratio: f64,
    pub grading_contrast: f64,
    /// update-size tolerance of the inner relaxation, in B(q) units
    pub tol_inner: f64,
    /// sup-change tolerance of the outer fixed point, in speed units
    pub tol_outer: f64,
    pub sor_omega: f64,
    pub max_sweeps: usize,
    pub max_outer: usize,
    pub damping: f64,
    /// continuation stops once c* - c < continuation_target * c*
    pub continuation_target: f64,
}

impl Default for SubsonicConfig {
    fn default() -> Self {
        SubsonicConfig {
            n_phi: 128,
            n_psi: 32,
            grading_ratio: 1.1,
            grading_contrast: 1e4,
            tol_inner: 1e-12,
            tol_outer: 1e-8,
            sor_omega: 1.88,
            max_sweeps: 40_000,
            max_outer: 80,
            damping: 0.5,
            continuation_target: 1e-6,
        }
    }
}

/// Converged subsonic speed field with its iterate metadata.
#[derive(Debug, Clone)]
pub struct SubsonicField {
    /// phi stations, increasing from zeta_- to 0 (graded toward 0)
    pub phi: Vec<f64>,
    /// psi stations, uniform on [0, m_in]
    pub psi: Vec<f64>,
    /// speed q, indexed [phi station][psi station]
    pub q: Array2<f64>,
    /// transformed unknown u = B(q)
    pub u: Array2<f64>,
    pub zeta_minus: f64,
    pub m_in: f64,
    pub outer_iterations: usize,
    pub inner_sweeps: usize,
    /// final inner residual (u units)
    pub residual: f64,
    /// outer sup-change history
    pub outer_history: Vec<f64>,
}

impl SubsonicField {
    /// Bilinear sample of q.
    pub fn sample_q(&self, phi: f64, psi: f64) -> f64 {
        let nj = self.psi.len();
        let j_hi = match self.psi.binary_search_by(|v| v.partial_cmp(&psi).unwrap()) {
            Ok(j) => j.max(1),
            Err(j) => j.clamp(1, nj - 1),
        };
        let t = ((psi - self.psi[j_hi - 1]) / (self.psi[j_hi] - self.psi[j_hi - 1]))
            .clamp(0.0, 1.0);
        let row = |j: usize| -> f64 {
            let col: Vec<f64> = (0..self.phi.len()).map(|i| self.q[[i, j]]).collect();
            lerp_clamped(&self.phi, &col, phi)
        };
        row(j_hi - 1) * (1.0 - t) + row(j_hi) * t
    }
}

struct Workspace {
    phi: Vec<f64>,
    psi: Vec<f64>,
    g_in: Vec<f64>,
    g_wall: Vec<f64>,
    /// weighted E coefficients per phi index: (east, west, center)
    cphi: Vec<(f64, f64, f64)>,
    h_psi: f64,
    u_floor: f64,
}

impl Workspace {
    fn build(maps: &BoundaryMaps, gas: &GasModel, cfg: &SubsonicConfig) -> Workspace {
        let len = -maps.zeta_minus;
        let graded = grid::graded(len, cfg.n_phi, cfg.grading_ratio, cfg.grading_contrast);
        // stations increase from zeta_- to 0, clustered at 0
        let phi: Vec<f64> = graded.iter().rev().map(|&s| -s).collect();
        let n_psi = cfg.n_psi;
        let psi: Vec<f64> = (0..=n_psi)
            .map(|j| maps.m_in * j as f64 / n_psi as f64)
            .collect();
        let g_in: Vec<f64> = psi.iter().map(|&p| maps.inlet_data(p, gas)).collect();
        let g_wall: Vec<f64> = phi.iter().map(|&f| maps.wall_minus_data(f)).collect();
        let mut cphi = Vec::with_capacity(phi.len());
        for i in 0..phi.len() {
            if i == 0 {
                let h0 = phi[1] - phi[0];
                // ghost through the inlet Neumann data: double-strength east
                cphi.push((2.0 / (h0 * h0), 0.0, 2.0 / (h0 * h0)));
            } else if i + 1 < phi.len() {
                let hm = phi[i] - phi[i - 1];
                let hp = phi[i + 1] - phi[i];
                cphi.push((
                    2.0 / (hp * (hm + hp)),
                    2.0 / (hm * (hm + hp)),
                    2.0 / (hm * hp),
                ));
            } else {
                cphi.push((0.0, 0.0, 0.0)); // Dirichlet station
            }
        }
        Workspace {
            phi,
            psi,
            g_in,
            g_wall,
            cphi,
            h_psi: maps.m_in / n_psi as f64,
            u_floor: gas.e_lo(),
        }
    }
}

/// Solve the regularized problem with outlet value `c < c*`. The returned
/// field satisfies the update-size tolerance `cfg.tol_inner`; an excursion
/// above the sonic value or below the tabulated speed floor aborts.
pub fn solve_regularized(
    maps: &BoundaryMaps,
    gas: &GasModel,
    c: f64,
    cfg: &SubsonicConfig,
    warm: Option<&Array2<f64>>,
) -> Result<SubsonicField> {
    let ws = Workspace::build(maps, gas, cfg);
    let mut u = initial_field(&ws, gas, c, warm);
    let (sweeps, residual) = relax(&mut u, &ws, gas, c, cfg, cfg.tol_inner)?;
    finish_field(u, ws, maps, gas, sweeps, residual)
}

fn initial_field(
    ws: &Workspace,
    gas: &GasModel,
    c: f64,
    warm: Option<&Array2<f64>>,
) -> Array2<f64> {
    let ni = ws.phi.len();
    let nj = ws.psi.len();
    let uc = gas.b_raw(c);
    let mut u = match warm {
        Some(prev) if prev.dim() == (ni, nj) => prev.clone(),
        _ => Array2::from_elem((ni, nj), uc),
    };
    for j in 0..nj {
        u[[ni - 1, j]] = uc;
    }
    u
}

fn relax(
    u: &mut Array2<f64>,
    ws: &Workspace,
    gas: &GasModel,
    c: f64,
    cfg: &SubsonicConfig,
    tol: f64,
) -> Result<(usize, f64)> {
    let ni = ws.phi.len();
    let nj = ws.psi.len();
    let uc = gas.b_raw(c);
    for j in 0..nj {
        u[[ni - 1, j]] = uc;
    }
    let us = u.as_slice_mut().expect("standard layout");
    let mut e_cache: Vec<f64> = us.iter().map(|&v| gas.e_fast(v)).collect();
    let cpsi = 1.0 / (ws.h_psi * ws.h_psi);
    let c_psi_c = 2.0 * cpsi;
    let h0 = ws.phi[1] - ws.phi[0];
    let omega = if cfg.sor_omega > 0.0 {
        cfg.sor_omega
    } else {
        2.0 / (1.0 + (std::f64::consts::PI / ni.max(nj) as f64).sin())
    };
    let mut residual = f64::INFINITY;
    let mut sweeps = 0;
    while sweeps < cfg.max_sweeps {
        let mut max_step = 0.0f64;
        // alternating sweep direction speeds up transport of boundary
        // information across the graded zone
        let forward = sweeps % 2 == 0;
        for ii in 0..ni - 1 {
            let i = if forward { ii } else { ni - 2 - ii };
            let (ce_e, ce_w, ce_c) = ws.cphi[i];
            let base = i * nj;
            for jj in 0..nj {
                let j = if forward { jj } else { nj - 1 - jj };
                let idx = base + j;
                // phi neighbors in E values; at the inlet the ghost value
                // E_{-1} = E_1 - 2 h0 g_in is substituted
                let (s_phi, extra) = if i == 0 {
                    (ce_e * e_cache[nj + j], -2.0 * ws.g_in[j] / h0)
                } else {
                    (
                        ce_e * e_cache[idx + nj] + ce_w * e_cache[idx - nj],
                        0.0,
                    )
                };
                // psi neighbors in u values
                let (s_psi, extra_psi) = if j == 0 {
                    (2.0 * cpsi * us[idx + 1], 0.0)
                } else if j == nj - 1 {
                    (2.0 * cpsi * us[idx - 1], 2.0 * ws.g_wall[i] / ws.h_psi)
                } else {
                    (cpsi * (us[idx + 1] + us[idx - 1]), 0.0)
                };
                // solve ce_c E(v) + c_psi_c v = target for the nodal value
                let target = s_phi + s_psi + extra + extra_psi;
                let mut v = us[idx];
                let mut e_v = e_cache[idx];
                for it in 0..30 {
                    let (ev, dev) = gas.e_and_prime_fast(v);
                    e_v = ev;
                    let r = ce_c * ev + c_psi_c * v - target;
                    let step = r / (ce_c * dev + c_psi_c);
                    v -= step;
                    if v > 0.0 {
                        v = 0.0;
                    }
                    if v < ws.u_floor {
                        return Err(Error::Numerics(format!(
                            "subsonic relaxation hit the speed floor at node ({i},{j})"
                        )));
                    }
                    if step.abs() <= 1e-16 {
                        if it > 0 || step == 0.0 {
                            e_v = gas.e_fast(v);
                        }
                        break;
                    }
                }
                let old = us[idx];
                let mut newv = old + omega * (v - old);
                if newv > 0.0 {
                    // an over-relaxed step across the sonic bound would
                    // limit-cycle against the clamp; take the plain nodal
                    // solve instead
                    newv = v;
                }
                max_step = max_step.max((newv - old).abs());
                us[idx] = newv;
                e_cache[idx] = if newv == v { e_v } else { gas.e_fast(newv) };
            }
        }
        sweeps += 1;
        residual = max_step;
        // near the sonic boundary the phi coupling E'(u) collapses and the
        // psi-constant error mode outlives any relaxation factor; a Newton
        // step on the psi-averaged 1-D problem removes it
        if sweeps % 4 == 0 {
            let corr = mean_mode_correction(us, &mut e_cache, ws, gas, cpsi);
            if std::env::var("LAVAL_DEBUG_RELAX").is_ok() && sweeps % 512 == 0 {
                eprintln!("sweep {sweeps}: gs {max_step:.4e} corr {corr:.4e}");
            }
            max_step = max_step.max(corr);
            residual = max_step;
        }
        if max_step <= tol {
            break;
        }
    }
    if residual > tol * 10.0 {
        return Err(Error::Divergence(format!(
            "inner relaxation stalled at update {residual:.3e} after {sweeps} sweeps (c = {c})"
        )));
    }
    Ok((sweeps, residual))
}

/// One Newton step on the psi-averaged residual system, applied uniformly
/// in psi. The psi fluxes of a psi-uniform correction cancel (ghosts carry
/// fixed data), so the aggregated system is the tridiagonal 1-D degenerate
/// problem in phi.
fn mean_mode_correction(
    us: &mut [f64],
    e_cache: &mut [f64],
    ws: &Workspace,
    gas: &GasModel,
    cpsi: f64,
) -> f64 {
    let ni = ws.phi.len();
    let nj = ws.psi.len();
    let h0 = ws.phi[1] - ws.phi[0];
    let njf = nj as f64;
    let mut sub = vec![0.0; ni - 1];
    let mut diag = vec![0.0; ni - 1];
    let mut sup = vec![0.0; ni - 1];
    let mut rhs = vec![0.0; ni - 1];
    for i in 0..ni - 1 {
        let (ce_e, ce_w, ce_c) = ws.cphi[i];
        let base = i * nj;
        let mut r_mean = 0.0;
        let mut dp_c = 0.0;
        let mut dp_e = 0.0;
        let mut dp_w = 0.0;
        for j in 0..nj {
            let idx = base + j;
            let (s_phi, extra) = if i == 0 {
                (ce_e * e_cache[nj + j], -2.0 * ws.g_in[j] / h0)
            } else {
                (ce_e * e_cache[idx + nj] + ce_w * e_cache[idx - nj], 0.0)
            };
            let (s_psi, extra_psi) = if j == 0 {
                (2.0 * cpsi * us[idx + 1], 0.0)
            } else if j == nj - 1 {
                (2.0 * cpsi * us[idx - 1], 2.0 * ws.g_wall[i] / ws.h_psi)
            } else {
                (cpsi * (us[idx + 1] + us[idx - 1]), 0.0)
            };
            let c_psi_c = 2.0 * cpsi;
            r_mean += s_phi + s_psi + extra + extra_psi - ce_c * e_cache[idx] - c_psi_c * us[idx];
            dp_c += gas.e_and_prime_fast(us[idx]).1;
            if i + 1 < ni {
                dp_e += gas.e_and_prime_fast(us[idx + nj]).1;
            }
            if i > 0 {
                dp_w += gas.e_and_prime_fast(us[idx - nj]).1;
            }
        }
        r_mean /= njf;
        // floor keeps the fully sonic row solvable
        diag[i] = -(ce_c * (dp_c / njf)).min(-1e-280);
        sup[i] = if i + 1 < ni - 1 { ce_e * (dp_e / njf) } else { 0.0 };
        sub[i] = if i > 0 { ce_w * (dp_w / njf) } else { 0.0 };
        rhs[i] = -r_mean;
        // the Dirichlet column contributes no unknown; its coefficient is
        // simply dropped (delta = 0 there)
        if i + 1 == ni - 1 {
            // correction vanishes at the Dirichlet station
        }
    }
    // Thomas solve
    let n = ni - 1;
    let mut c_star_row = vec![0.0; n];
    let mut d_star = vec![0.0; n];
    c_star_row[0] = sup[0] / diag[0];
    d_star[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - sub[i] * c_star_row[i - 1];
        c_star_row[i] = sup[i] / m;
        d_star[i] = (rhs[i] - sub[i] * d_star[i - 1]) / m;
    }
    let mut delta = vec![0.0; n];
    delta[n - 1] = d_star[n - 1];
    for i in (0..n - 1).rev() {
        delta[i] = d_star[i] - c_star_row[i] * delta[i + 1];
    }
    if std::env::var("LAVAL_DEBUG_CORR").is_ok() {
        let rmax = rhs.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let dmax0 = delta.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let e_mean: f64 = (0..ni - 1).map(|i| -diag[i]).sum::<f64>() / (ni - 1) as f64;
        eprintln!("corr: |r|={rmax:.3e} |delta|={dmax0:.3e} diagmean={e_mean:.3e} d0={:.3e} dend={:.3e}", delta[0], delta[n-1]);
    }
    // trust region: the Newton step is only asymptotically valid, so scale
    // transient corrections down to a fraction of the field range
    let scale = us.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let cap = 0.05 * scale + 1e-9;
    let dmax = delta.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let shrink = if dmax > cap { cap / dmax } else { 1.0 };
    let mut max_change = 0.0f64;
    for (i, &d) in delta.iter().enumerate() {
        if !d.is_finite() {
            return 0.0;
        }
        for j in 0..nj {
            let idx = i * nj + j;
            let newv = (us[idx] + shrink * d).min(0.0).max(ws.u_floor * 0.98);
            max_change = max_change.max((newv - us[idx]).abs());
            us[idx] = newv;
            e_cache[idx] = gas.e_fast(newv);
        }
    }
    max_change
}

fn finish_field(
    u: Array2<f64>,
    ws: Workspace,
    maps: &BoundaryMaps,
    gas: &GasModel,
    sweeps: usize,
    residual: f64,
) -> Result<SubsonicField> {
    let (ni, nj) = u.dim();
    let mut q = Array2::zeros((ni, nj));
    for i in 0..ni {
        for j in 0..nj {
            let ui = u[[i, j]];
            if ui > 1e-12 {
                return Err(Error::Divergence(format!(
                    "loss of subsonicity at node ({i},{j}): u = {ui:.3e}"
                )));
            }
            q[[i, j]] = if ui >= -1e-300 {
                gas.c_star()
            } else {
                gas.b_inv(ui).map_err(Error::Gas)?
            };
        }
    }
    Ok(SubsonicField {
        phi: ws.phi,
        psi: ws.psi,
        q,
        u,
        zeta_minus: maps.zeta_minus,
        m_in: maps.m_in,
        outer_iterations: 0,
        inner_sweeps: sweeps,
        residual,
        outer_history: Vec::new(),
    })
}

/// Default continuation ladder `c_k = c* (1 - 2^{-k}/3)` down to the target.
pub fn continuation_schedule(gas: &GasModel, target: f64) -> Vec<f64> {
    let c_star = gas.c_star();
    let mut out = Vec::new();
    let mut k = 1;
    loop {
        let gap = 2f64.powi(-k) / 3.0;
        out.push(c_star * (1.0 - gap));
        if gap < target {
            break;
        }
        k += 1;
    }
    out
}

/// Warm-started continuation to the sonic outlet value, with a final linear
/// extrapolation of the last two iterates to c = c* (the schedule halves the
/// gap, so the extrapolated field is second-order accurate in c* - c).
pub fn continue_to_sonic(
    maps: &BoundaryMaps,
    gas: &GasModel,
    schedule: &[f64],
    cfg: &SubsonicConfig,
    warm: Option<&Array2<f64>>,
) -> Result<SubsonicField> {
    assert!(!schedule.is_empty());
    let ws = Workspace::build(maps, gas, cfg);
    let mut u = initial_field(&ws, gas, schedule[0], warm);
    let mut total_sweeps = 0;
    let mut residual = 0.0;
    let mut prev: Option<Array2<f64>> = None;
    for (step, &c) in schedule.iter().enumerate() {
        if step + 1 == schedule.len() && schedule.len() >= 2 {
            prev = Some(u.clone());
        }
        // intermediate ladder steps only warm-start the next one; full
        // tolerance is reserved for the extrapolation pair
        let tol = if step + 2 >= schedule.len() {
            cfg.tol_inner
        } else {
            cfg.tol_inner.max(1e-3 * (gas.c_star() - c))
        };
        let (sweeps, r) = relax(&mut u, &ws, gas, c, cfg, tol)?;
        total_sweeps += sweeps;
        residual = r;
    }
    // extrapolate u_* ~ u_K + (u_K - u_{K-1}) r/(1-r); r = 1/2 for the
    // halving ladder
    if let Some(p) = prev {
        let ck = schedule[schedule.len() - 1];
        let ck1 = schedule[schedule.len() - 2];
        let r = (gas.c_star() - ck) / (gas.c_star() - ck1);
        let w = r / (1.0 - r);
        for (v, &pv) in u.iter_mut().zip(p.iter()) {
            *v = (*v + w * (*v - pv)).min(0.0);
        }
    }
    finish_field(u, ws, maps, gas, total_sweeps, residual)
}

/// Outcome of the outer fixed point: converged field plus the maps of its
/// final iterate.
pub struct SubsonicSolution {
    pub field: SubsonicField,
    pub maps: BoundaryMaps,
}

/// Damped fixed point on the inlet/wall speed traces (the lagged nonlocal
/// boundary conditions). The inlet readback is renormalized each iteration
/// so the incoming mass flux equals the throat flux exactly: the continuous
/// fixed point satisfies that identity exactly, while a raw discrete
/// readback would only satisfy it to truncation error.
pub fn outer_fixed_point(
    spec: &NozzleSpec,
    gas: &GasModel,
    cfg: &SubsonicConfig,
    seed: Option<(Profile, Profile)>,
) -> Result<SubsonicSolution> {
    let c_star = gas.c_star();
    let fl = spec.inlet_height();
    let n_bnd = 129;
    let ys: Vec<f64> = (0..n_bnd)
        .map(|i| fl * i as f64 / (n_bnd - 1) as f64)
        .collect();
    let xs: Vec<f64> = (0..n_bnd)
        .map(|i| spec.l_minus * (1.0 - i as f64 / (n_bnd - 1) as f64))
        .collect();
    let (mut q_in, mut q_minus) = match seed {
        Some((a, b)) => (a, b),
        None => (
            Profile::constant(0.0, fl, c_star),
            Profile::constant(spec.l_minus, 0.0, c_star),
        ),
    };
    let schedule = continuation_schedule(gas, cfg.continuation_target);
    // once an outer iterate exists, only the extrapolation pair of the
    // ladder needs re-solving
    let tail: Vec<f64> = schedule[schedule.len().saturating_sub(2)..].to_vec();
    let mut warm: Option<Array2<f64>> = None;
    let mut history = Vec::new();
    let mut result: Option<(SubsonicField, BoundaryMaps)> = None;
    for outer in 0..cfg.max_outer {
        // project the inlet profile onto the exact-flux manifold
        q_in = normalize_inlet_flux(spec, gas, &q_in, &ys)?;
        let maps = BoundaryMaps::build(
            spec,
            gas,
            q_in.clone(),
            q_minus.clone(),
            Profile::constant(0.0, spec.l_plus, c_star),
        )?;
        let ladder = if warm.is_none() { &schedule[..] } else { &tail[..] };
        let field = continue_to_sonic(&maps, gas, ladder, cfg, warm.as_ref())?;
        // read back the boundary traces
        let new_in: Vec<f64> = ys
            .iter()
            .map(|&y| field.sample_q(maps.zeta_minus, maps.psi_in.eval(y)))
            .collect();
        let new_minus: Vec<f64> = xs
            .iter()
            .map(|&x| field.sample_q(maps.phi_minus.eval(x), maps.m_in))
            .collect();
        let change_in = ys
            .iter()
            .zip(new_in.iter())
            .map(|(&y, &v)| (v - q_in.eval(y)).abs())
            .fold(0.0f64, f64::max);
        let change_minus = xs
            .iter()
            .zip(new_minus.iter())
            .map(|(&x, &v)| (v - q_minus.eval(x)).abs())
            .fold(0.0f64, f64::max);
        let change = change_in.max(change_minus);
        history.push(change);
        let damp = cfg.damping;
        let upd_in: Vec<f64> = ys
            .iter()
            .zip(new_in.iter())
            .map(|(&y, &v)| (1.0 - damp) * q_in.eval(y) + damp * v)
            .collect();
        let upd_minus: Vec<f64> = xs
            .iter()
            .zip(new_minus.iter())
            .map(|(&x, &v)| (1.0 - damp) * q_minus.eval(x) + damp * v)
            .collect();
        q_in = Profile::new(ys.clone(), upd_in);
        q_minus = Profile::new(xs.clone(), upd_minus);
        warm = Some(field.u.clone());
        let mut done_field = field;
        done_field.outer_iterations = outer + 1;
        done_field.outer_history = history.clone();
        result = Some((done_field, maps));
        if change <= cfg.tol_outer {
            break;
        }
        if history.len() >= 8 && history[history.len() - 1] > 20.0 * history[0].max(1e-14) {
            return Err(Error::Divergence(format!(
                "subsonic outer iteration diverging: history {history:?}"
            )));
        }
    }
    let (field, maps) = result.expect("at least one outer iteration ran");
    if *history.last().unwrap() > cfg.tol_outer {
        return Err(Error::Divergence(format!(
            "subsonic outer iteration failed to reach {:.1e} in {} iterations (last change {:.3e})",
            cfg.tol_outer,
            cfg.max_outer,
            history.last().unwrap()
        )));
    }
    Ok(SubsonicSolution { field, maps })
}

/// Shift the inlet profile by a constant so the incoming mass flux matches
/// the throat flux. Errors if even the sonic profile cannot pass the flux
/// (inadmissible inlet arc).
fn normalize_inlet_flux(
    spec: &NozzleSpec,
    gas: &GasModel,
    q_in: &Profile,
    ys: &[f64],
) -> Result<Profile> {
    let m = crate::nozzle::mass_flux(spec, gas);
    let c_star = gas.c_star();
    let flux_defect = |shift: f64| -> f64 {
        let mut acc = 0.0;
        let fv = |y: f64| {
            let q = (q_in.eval(y) + shift).clamp(0.05 * c_star, c_star);
            q * gas.density(q * q).unwrap() / spec.theta_in(y).cos()
        };
        for w in ys.windows(2) {
            acc += 0.5 * (fv(w[0]) + fv(w[1])) * (w[1] - w[0]);
        }
        acc - m
    };
    let max_q = ys
        .iter()
        .map(|&y| q_in.eval(y))
        .fold(f64::NEG_INFINITY, f64::max);
    let hi = c_star - max_q + 0.05 * c_star;
    let lo = -0.5 * c_star;
    let defect_hi = flux_defect(hi);
    if defect_hi < -1e-12 * m {
        return Err(Error::Divergence(
            "inlet cannot pass the critical mass flux (inadmissible inlet arc)".into(),
        ));
    }
    let shift = if defect_hi <= 0.0 {
        // uniformly sonic inlet passes the flux exactly (flat channel)
        hi
    } else {
        if flux_defect(lo) > 0.0 {
            return Err(Error::Divergence(
                "inlet flux normalization lost its lower bracket".into(),
            ));
        }
        crate::numerics::rootfind::bisect(flux_defect, lo, hi, 1e-14)
            .ok_or_else(|| Error::Divergence("inlet flux normalization failed".into()))?
    };
    let vals: Vec<f64> = ys
        .iter()
        .map(|&y| (q_in.eval(y) + shift).min(c_star))
        .collect();
    Ok(Profile::new(ys.to_vec(), vals))
}

/// Closed-form barrier machinery of the comparison arguments, shared by the
/// property tests and the acceptance suite.
pub mod barriers {
    use super::*;

    /// sup over the boundary of the data coefficients against their power
    /// envelopes; bounds both the inlet and the wall Neumann data.
    pub fn data_sup_mu2(maps: &BoundaryMaps, gas: &GasModel, lambda: f64) -> f64 {
        let mut mu2 = 0.0f64;
        for k in 1..200 {
            let phi = maps.zeta_minus * k as f64 / 200.0;
            mu2 = mu2.max(maps.wall_minus_data(phi) / (-phi).powf(lambda));
        }
        for k in 0..=200 {
            let psi = maps.m_in * k as f64 / 200.0;
            mu2 = mu2.max(maps.inlet_data(psi, gas) / (-maps.zeta_minus).powf(lambda + 1.0));
        }
        mu2
    }

    /// Ellipticity ratio floor used by the closed-form supersolution.
    pub fn epsilon0(gas: &GasModel, m_in: f64) -> f64 {
        let c = gas.c_star();
        let mut inf_ratio = f64::INFINITY;
        for k in 0..=400 {
            let q = 0.5 * c + (5.0 / 6.0 * c - 0.5 * c) * k as f64 / 400.0;
            inf_ratio = inf_ratio.min(gas.a_prime_raw(q) / gas.b_prime_raw(q));
        }
        (c / (12.0 * m_in * m_in)).min(inf_ratio)
    }

    /// Closed-form supersolution of the regularized problem (valid for
    /// outlet values c <= c*/2 on short nozzles).
    pub fn supersolution(gas: &GasModel, eps0: f64, phi: f64, psi: f64) -> f64 {
        2.0 / 3.0 * gas.c_star() - 2.0 * phi - phi * phi + eps0 * psi * psi
    }

    /// Closed-form subsolution `A_-^{-1}(A(c_floor) + mu2 phi)`.
    pub fn subsolution(gas: &GasModel, mu2: f64, c_floor: f64, phi: f64) -> f64 {
        let s = gas.a_raw(c_floor) + mu2 * phi;
        gas.a_inv_sub(s.min(0.0)).unwrap_or(gas.q_floor())
    }

    /// Largest |zeta_-| for which the supersolution argument applies.
    pub fn kappa1(gas: &GasModel, maps: &BoundaryMaps, lambda: f64) -> f64 {
        let c = gas.c_star();
        let eps0 = epsilon0(gas, maps.m_in);
        let mu2 = data_sup_mu2(maps, gas, lambda);
        let mut inf_bp = f64::INFINITY;
        for k in 0..=200 {
            let q = 0.5 * c + (5.0 / 6.0 * c - 0.5 * c) * k as f64 / 200.0;
            inf_bp = inf_bp.min(gas.b_prime_raw(q));
        }
        (c / 6.0)
            .sqrt()
            .min(c / 24.0)
            .min((2.0 * eps0 * maps.m_in * inf_bp / mu2).powf(1.0 / lambda))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gas() -> &'static GasModel {
        crate::test_gas()
    }

    fn straight_maps(gas: &GasModel, c: f64) -> (NozzleSpec, BoundaryMaps) {
        let spec = NozzleSpec::straight_channel(-0.4, 0.3, 1.0).unwrap();
        let maps = BoundaryMaps::build(
            &spec,
            gas,
            Profile::constant(0.0, spec.inlet_height(), c),
            Profile::constant(spec.l_minus, 0.0, c),
            Profile::constant(0.0, spec.l_plus, gas.c_star()),
        )
        .unwrap();
        (spec, maps)
    }

    fn small_nozzle(gas: &GasModel, l: f64) -> (NozzleSpec, BoundaryMaps) {
        let spec = NozzleSpec::default_wall(-l, l, 1.0, 3.0, 3.0, 0.1).unwrap();
        let c = 0.98 * gas.c_star();
        let maps = BoundaryMaps::build(
            &spec,
            gas,
            Profile::constant(0.0, spec.inlet_height(), c),
            Profile::constant(spec.l_minus, 0.0, c),
            Profile::constant(0.0, spec.l_plus, gas.c_star()),
        )
        .unwrap();
        (spec, maps)
    }

    #[test]
    fn straight_channel_constant_solution_is_exact() {
        let g = gas();
        let c = 0.5 * g.c_star();
        let (_, maps) = straight_maps(g, c);
        let cfg = SubsonicConfig {
            n_phi: 24,
            n_psi: 8,
            ..Default::default()
        };
        let field = solve_regularized(&maps, g, c, &cfg, None).unwrap();
        for v in field.q.iter() {
            assert!((v - c).abs() < 1e-12, "q deviates: {v} vs {c}");
        }
    }

    #[test]
    fn supersolution_bounds_regularized_field() {
        let g = gas();
        let (_, maps) = small_nozzle(g, 0.03);
        let kappa1 = barriers::kappa1(g, &maps, 3.0);
        assert!(
            -maps.zeta_minus < kappa1,
            "fixture must satisfy the barrier smallness (zeta = {}, kappa1 = {kappa1})",
            maps.zeta_minus
        );
        let c = 0.5 * g.c_star();
        let cfg = SubsonicConfig {
            n_phi: 33,
            n_psi: 17,
            ..Default::default()
        };
        let field = solve_regularized(&maps, g, c, &cfg, None).unwrap();
        let eps0 = barriers::epsilon0(g, maps.m_in);
        for (i, &phi) in field.phi.iter().enumerate() {
            for (j, &psi) in field.psi.iter().enumerate() {
                let bar = barriers::supersolution(g, eps0, phi, psi);
                assert!(
                    field.q[[i, j]] <= bar + 1e-9,
                    "barrier violated at ({phi},{psi}): {} > {bar}",
                    field.q[[i, j]]
                );
            }
        }
    }

    #[test]
    fn subsolution_bounds_field_from_below() {
        let g = gas();
        let (_, maps) = small_nozzle(g, 0.03);
        let c = 0.6 * g.c_star();
        let cfg = SubsonicConfig {
            n_phi: 33,
            n_psi: 17,
            ..Default::default()
        };
        let field = solve_regularized(&maps, g, c, &cfg, None).unwrap();
        let mu2 = barriers::data_sup_mu2(&maps, g, 3.0);
        for (i, &phi) in field.phi.iter().enumerate() {
            for j in 0..field.psi.len() {
                let bar = barriers::subsolution(g, mu2, c, phi);
                assert!(
                    field.q[[i, j]] >= bar - 1e-9,
                    "subsolution violated at phi={phi}: {} < {bar}",
                    field.q[[i, j]]
                );
            }
        }
    }

    #[test]
    fn solutions_ordered_in_outlet_value() {
        let g = gas();
        let (_, maps) = small_nozzle(g, 0.05);
        let cfg = SubsonicConfig {
            n_phi: 33,
            n_psi: 17,
            ..Default::default()
        };
        let c1 = 0.5 * g.c_star();
        let c2 = 0.7 * g.c_star();
        let f1 = solve_regularized(&maps, g, c1, &cfg, None).unwrap();
        let f2 = solve_regularized(&maps, g, c2, &cfg, None).unwrap();
        for (a, b) in f1.q.iter().zip(f2.q.iter()) {
            assert!(a <= &(b + 1e-10), "comparison principle violated: {a} > {b}");
        }
    }

    #[test]
    fn continuation_on_straight_channel_is_stable() {
        let g = gas();
        let c = 0.5 * g.c_star();
        let (_, maps) = straight_maps(g, c);
        let cfg = SubsonicConfig {
            n_phi: 24,
            n_psi: 8,
            ..Default::default()
        };
        let field = continue_to_sonic(&maps, g, &[c], &cfg, None).unwrap();
        for v in field.q.iter() {
            assert!((v - c).abs() < 1e-12);
        }
    }

    #[test]
    fn outer_fixed_point_straight_channel_immediate() {
        let g = gas();
        let spec = NozzleSpec::straight_channel(-0.3, 0.3, 1.0).unwrap();
        let cfg = SubsonicConfig {
            n_phi: 24,
            n_psi: 8,
            ..Default::default()
        };
        let sol = outer_fixed_point(&spec, g, &cfg, None).unwrap();
        assert_eq!(sol.field.outer_iterations, 1);
        for v in sol.field.q.iter() {
            assert!((v - g.c_star()).abs() < 1e-12);
        }
        // flux identity at the fixed point
        assert!((sol.maps.m_in - sol.maps.m).abs() / sol.maps.m < 1e-10);
    }

    #[test]
    fn schedule_reaches_target() {
        let g = gas();
        let s = continuation_schedule(g, 1e-6);
        assert!(g.c_star() - s.last().unwrap() < 1e-6 * g.c_star());
        for w in s.windows(2) {
            assert!(w[1] > w[0]);
        }
    }
}
