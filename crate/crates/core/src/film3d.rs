//! The full three-dimensional energy on the shell `X = x + εtν(x)`,
//! `t ∈ (−1, 1)`, over a surface of revolution, evaluated on the fixed
//! domain `M × (−1, 1)`.
//!
//! Gradients use `∇_X Qⱼ = (∇_M Q̂ⱼ + ε⁻¹ Q̂ⱼ,ₜ ⊗ ν) Φ` with
//! `Φ = (I + εt∇_M ν)⁻¹`, and the volume element is
//! `dV = ε det(I + εt∇_M ν) dA dt`, both without expansion in `ε`.
//!
//! Signed curvatures `k_T = −κ_T`, `k_N = −κ_N` are the eigenvalues of
//! `∇_M ν` along `T` and `N`, so the normal map folds once `ε|k| ≥ 1`.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::elastic::{anchoring_terms, f_e, f_ldg, AnchoringParams, ElasticConstants, GradQ, LdGParams};
use crate::error::{Error, Result};
use crate::qtensor::{Mat3, QTensor};
use crate::remnant::{closed_form_g, f_e0, GTensor, RemnantInput};
use crate::surface::{FramePoint, SurfaceOfRevolution};

pub const DEFAULT_SHELL_GRID: (usize, usize, usize) = (64, 128, 16);

/// Uniform `(s, θ)` nodes on the surface with cached geometry.
#[derive(Clone, Debug)]
pub struct SurfaceGrid {
    surface: SurfaceOfRevolution,
    ns: usize,
    nth: usize,
    ds: f64,
    dth: f64,
    frames: Vec<FramePoint>,
    a1: Vec<f64>,
    /// Eigenvalues of `∇_M ν` along `T` and `N` per row.
    k: Vec<[f64; 2]>,
}

impl SurfaceGrid {
    pub fn new(surface: SurfaceOfRevolution, ns: usize, nth: usize) -> Result<Self> {
        if ns < 3 || nth < 3 {
            return Err(Error::InvalidInput(format!("surface grid needs at least 3x3 nodes (got {ns}x{nth})")));
        }
        let ds = surface.length() / (ns - 1) as f64;
        let dth = std::f64::consts::TAU / nth as f64;
        let mut frames = Vec::with_capacity(ns * nth);
        let mut a1 = Vec::with_capacity(ns);
        let mut k = Vec::with_capacity(ns);
        for i in 0..ns {
            let s = (surface.s0() + i as f64 * ds).min(surface.s1());
            let c = surface.curvatures(s)?;
            a1.push(surface.a1(s)?);
            k.push([-c.kappa_t, -c.kappa_n]);
            for j in 0..nth {
                frames.push(surface.frame_at(s, j as f64 * dth)?);
            }
        }
        Ok(SurfaceGrid { surface, ns, nth, ds, dth, frames, a1, k })
    }

    pub fn surface(&self) -> &SurfaceOfRevolution {
        &self.surface
    }

    pub fn ns(&self) -> usize {
        self.ns
    }

    pub fn ntheta(&self) -> usize {
        self.nth
    }

    pub fn s(&self, i: usize) -> f64 {
        self.surface.s0() + i as f64 * self.ds
    }

    pub fn theta(&self, j: usize) -> f64 {
        j as f64 * self.dth
    }

    pub fn frame(&self, i: usize, j: usize) -> &FramePoint {
        &self.frames[i * self.nth + j % self.nth]
    }

    pub fn a1(&self, i: usize) -> f64 {
        self.a1[i]
    }

    pub fn signed_curvatures(&self, i: usize) -> [f64; 2] {
        self.k[i]
    }

    fn max_abs_curvature(&self) -> f64 {
        self.k.iter().map(|k| k[0].abs().max(k[1].abs())).fold(0.0, f64::max)
    }

    /// Trapezoid weight in `s` times `Δs Δθ a₁`.
    fn area_weight(&self, i: usize) -> f64 {
        let w = if i == 0 || i == self.ns - 1 { 0.5 } else { 1.0 };
        w * self.ds * self.dth * self.a1[i]
    }
}

/// Second-order first difference of `f` at index `i` on `0..n`, one-sided
/// at the ends.
fn diff_open<T>(f: impl Fn(usize) -> T, i: usize, n: usize, h: f64) -> T
where
    T: std::ops::Sub<Output = T> + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    if i == 0 {
        (f(0) * -3.0 + f(1) * 4.0 - f(2)) * (0.5 / h)
    } else if i == n - 1 {
        (f(n - 1) * 3.0 - f(n - 2) * 4.0 + f(n - 3)) * (0.5 / h)
    } else {
        (f(i + 1) - f(i - 1)) * (0.5 / h)
    }
}

/// A tensor field on the surface grid.
#[derive(Clone, Debug)]
pub struct SurfaceField {
    grid: SurfaceGrid,
    values: Vec<QTensor>,
}

impl SurfaceField {
    pub fn from_fn(grid: SurfaceGrid, f: impl Fn(f64, f64, &FramePoint) -> QTensor) -> Self {
        let mut values = Vec::with_capacity(grid.ns * grid.nth);
        for i in 0..grid.ns {
            for j in 0..grid.nth {
                values.push(f(grid.s(i), grid.theta(j), grid.frame(i, j)));
            }
        }
        SurfaceField { grid, values }
    }

    /// `Q = p₁(T⊗T − N⊗N) + p₂(T⊗N + N⊗T) + (3β/2)(ν⊗ν − I/3)`.
    pub fn from_p(grid: SurfaceGrid, beta: f64, p: impl Fn(f64, f64) -> [f64; 2]) -> Self {
        Self::from_fn(grid, |s, th, f| {
            crate::qtensor::assemble_unchecked(p(s, th), beta, &f.to_frame())
        })
    }

    pub fn grid(&self) -> &SurfaceGrid {
        &self.grid
    }

    pub fn get(&self, i: usize, j: usize) -> &QTensor {
        &self.values[i * self.grid.nth + j % self.grid.nth]
    }

    fn mat(&self, i: usize, j: usize) -> Mat3 {
        *self.get(i, j).matrix()
    }

    /// `∇_M Q = ∂ₛQ ⊗ T + a₁⁻¹ ∂_θQ ⊗ N` by finite differences.
    pub fn surface_gradient(&self, i: usize, j: usize) -> GradQ {
        let g = &self.grid;
        let qs = diff_open(|a| self.mat(a, j), i, g.ns, g.ds);
        let qt = (self.mat(i, j + 1) - self.mat(i, j + g.nth - 1)) * (0.5 / g.dth);
        let f = g.frame(i, j);
        let a1 = g.a1[i];
        let slices = [0, 1, 2].map(|k| qs * f.t[k] + qt * (f.n[k] / a1));
        GradQ::from_directional(&slices)
    }
}

/// `(I + εt∇_M ν)⁻¹`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhiMatrix(pub Mat3);

fn stretch(k: [f64; 2], eps: f64, t: f64) -> Result<[f64; 2]> {
    let f = [1.0 + eps * t * k[0], 1.0 + eps * t * k[1]];
    if f[0] <= 0.0 || f[1] <= 0.0 {
        let kmax = k[0].abs().max(k[1].abs());
        return Err(Error::Fold { eps, bound: 1.0 / kmax });
    }
    Ok(f)
}

fn phi_from_frame(f: &FramePoint, k: [f64; 2], eps: f64, t: f64) -> Result<PhiMatrix> {
    let [ft, fnn] = stretch(k, eps, t)?;
    Ok(PhiMatrix(
        f.t * f.t.transpose() / ft + f.n * f.n.transpose() / fnn + f.nu * f.nu.transpose(),
    ))
}

pub fn phi_matrix(surf: &SurfaceOfRevolution, s: f64, theta: f64, t: f64, eps: f64) -> Result<PhiMatrix> {
    let f = surf.frame_at(s, theta)?;
    let c = surf.curvatures(s)?;
    phi_from_frame(&f, [-c.kappa_t, -c.kappa_n], eps, t)
}

/// The shell `M × [−1, 1]` with `nt` (even) uniform intervals in `t`.
#[derive(Clone, Debug)]
pub struct ShellGrid {
    base: SurfaceGrid,
    eps: f64,
    nt: usize,
}

impl ShellGrid {
    pub fn new(base: SurfaceGrid, eps: f64, nt: usize) -> Result<Self> {
        if nt < 2 || !nt.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!("t grid needs an even number of intervals (got {nt})")));
        }
        if !(eps >= 0.0) {
            return Err(Error::InvalidInput(format!("epsilon must be nonnegative (got {eps})")));
        }
        let kmax = base.max_abs_curvature();
        if eps * kmax >= 1.0 {
            return Err(Error::Fold { eps, bound: 1.0 / kmax });
        }
        Ok(ShellGrid { base, eps, nt })
    }

    pub fn base(&self) -> &SurfaceGrid {
        &self.base
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn t(&self, m: usize) -> f64 {
        -1.0 + 2.0 * m as f64 / self.nt as f64
    }

    fn dt(&self) -> f64 {
        2.0 / self.nt as f64
    }

    /// Simpson weights on `[−1, 1]`.
    fn t_weight(&self, m: usize) -> f64 {
        let w = if m == 0 || m == self.nt {
            1.0
        } else if m % 2 == 1 {
            4.0
        } else {
            2.0
        };
        w * self.dt() / 3.0
    }
}

/// `Q̂(x, t)` on the shell grid.
#[derive(Clone, Debug)]
pub struct ShellField {
    grid: ShellGrid,
    values: Vec<QTensor>,
}

impl ShellField {
    pub fn from_fn(grid: ShellGrid, f: impl Fn(usize, usize, f64) -> QTensor) -> Self {
        let (ns, nth, nt) = (grid.base.ns, grid.base.nth, grid.nt);
        let mut values = Vec::with_capacity(ns * nth * (nt + 1));
        for i in 0..ns {
            for j in 0..nth {
                for m in 0..=nt {
                    values.push(f(i, j, grid.t(m)));
                }
            }
        }
        ShellField { grid, values }
    }

    pub fn grid(&self) -> &ShellGrid {
        &self.grid
    }

    pub fn get(&self, i: usize, j: usize, m: usize) -> &QTensor {
        let b = &self.grid.base;
        &self.values[((i * b.nth) + j % b.nth) * (self.grid.nt + 1) + m]
    }

    fn mat(&self, i: usize, j: usize, m: usize) -> Mat3 {
        *self.get(i, j, m).matrix()
    }
}

/// Ambient gradient `∇_X Q` at node `(i, j, m)` from finite differences in
/// `(s, θ, t)`: centered inside, one-sided second order at `s` and `t`
/// edges, periodic in `θ`.
pub fn full_gradient(field: &ShellField, i: usize, j: usize, m: usize) -> Result<GradQ> {
    let g = &field.grid;
    let b = &g.base;
    let qs = diff_open(|a| field.mat(a, j, m), i, b.ns, b.ds);
    let qth = (field.mat(i, j + 1, m) - field.mat(i, j + b.nth - 1, m)) * (0.5 / b.dth);
    let qt = diff_open(|c| field.mat(i, j, c), m, g.nt + 1, g.dt());
    let f = b.frame(i, j);
    let [st, sn] = stretch(b.k[i], g.eps, g.t(m))?;
    let a1 = b.a1[i];
    // ΦT = T/(1 + εt k_T), ΦN = N/(1 + εt k_N), Φν = ν
    let dir_s = f.t / st;
    let dir_th = f.n / (sn * a1);
    let inv_eps = if g.eps > 0.0 { 1.0 / g.eps } else { 0.0 };
    if g.eps == 0.0 && qt.amax() > 0.0 {
        return Err(Error::InvalidInput("t-dependent field on a shell of zero thickness".into()));
    }
    let dir_t = f.nu * inv_eps;
    let slices = [0, 1, 2].map(|k| qs * dir_s[k] + qth * dir_th[k] + qt * dir_t[k]);
    Ok(GradQ::from_directional(&slices))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilmParams {
    pub elastic: ElasticConstants,
    pub ldg: LdGParams,
    pub anchoring: AnchoringParams,
}

impl FilmParams {
    fn check(&self) -> Result<()> {
        if !self.elastic.is_coercive() {
            return Err(Error::IllPosed(format!(
                "elastic constants (M2={}, M3={}) are outside the coercive region",
                self.elastic.m2, self.elastic.m3
            )));
        }
        self.anchoring.validate()
    }
}

/// `F_ε = ε⁻¹∫_{Ω_ε}(f_e + δ⁻²f_LdG) dV + ε⁻¹∫_{M_{±ε}} f_s`, evaluated with
/// trapezoid (s), periodic trapezoid (θ) and Simpson (t) quadrature and the
/// exact Jacobians. Both faces use the normal `ν` of `M`.
pub fn f_eps(field: &ShellField, params: &FilmParams) -> Result<f64> {
    params.check()?;
    let g = &field.grid;
    let b = &g.base;
    if g.eps <= 0.0 {
        return Err(Error::InvalidInput("F_eps needs epsilon > 0".into()));
    }
    let inv_d2 = params.ldg.inv_delta2();
    let rows: Vec<f64> = (0..b.ns)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let area = b.area_weight(i);
            let mut acc = 0.0;
            for j in 0..b.nth {
                let nu = b.frame(i, j).nu;
                for m in 0..=g.nt {
                    let t = g.t(m);
                    let [st, sn] = stretch(b.k[i], g.eps, t)?;
                    let grad = full_gradient(field, i, j, m)?;
                    let q = field.get(i, j, m);
                    let density = f_e(&grad, &params.elastic) + inv_d2 * f_ldg(q, &params.ldg);
                    acc += g.t_weight(m) * st * sn * density;
                    if m == 0 || m == g.nt {
                        let (f0, f1) = anchoring_terms(q, &nu, &params.anchoring);
                        acc += st * sn * (f0 / g.eps + f1);
                    }
                }
            }
            Ok(acc * area)
        })
        .collect::<Result<_>>()?;
    Ok(rows.iter().sum())
}

fn check_admissible(q0: &SurfaceField, params: &FilmParams) -> Result<()> {
    let b = &q0.grid;
    let mut worst = 0.0_f64;
    for i in 0..b.ns {
        for j in 0..b.nth {
            let (f0, _) = anchoring_terms(q0.get(i, j), &b.frame(i, j).nu, &params.anchoring);
            worst = worst.max(f0);
        }
    }
    if worst > 1e-10 {
        return Err(Error::Inadmissible { max_violation: worst });
    }
    Ok(())
}

/// Nodewise minimizer `Ḡ` for the discrete surface gradient of `Q₀`.
pub fn remnant_field(q0: &SurfaceField, params: &FilmParams) -> Result<Vec<GTensor>> {
    let b = &q0.grid;
    (0..b.ns * b.nth)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / b.nth, idx % b.nth);
            let input = RemnantInput::new(q0.surface_gradient(i, j), b.frame(i, j).nu, params.elastic)?;
            closed_form_g(&input)
        })
        .collect()
}

/// The recovery field `Q̂_ε(x, t) = Q₀(x) + εtḠ(x)`.
pub fn build_recovery(q0: &SurfaceField, params: &FilmParams, eps: f64, nt: usize) -> Result<ShellField> {
    params.check()?;
    check_admissible(q0, params)?;
    let gbar = remnant_field(q0, params)?;
    let grid = ShellGrid::new(q0.grid.clone(), eps, nt)?;
    let nth = q0.grid.nth;
    Ok(ShellField::from_fn(grid, |i, j, t| {
        let g = gbar[i * nth + j].matrix();
        QTensor::project(q0.get(i, j).matrix() + g * (eps * t))
    }))
}

/// Two normalizations of the limiting energy of `Q₀`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitEnergy {
    /// `∫_M 2 f_e⁰ + 2δ⁻² f_LdG + 2 f_s⁽¹⁾`: the `ε → 0` value of `F_ε`
    /// along the recovery sequence (the bulk integrand is integrated over
    /// `t ∈ (−1, 1)`, the surface term counts both faces).
    pub thickness_integrated: f64,
    /// `∫_M f_e⁰ + δ⁻² f_LdG + 2 f_s⁽¹⁾`.
    pub per_unit_thickness: f64,
}

pub fn limit_energy(q0: &SurfaceField, params: &FilmParams) -> Result<LimitEnergy> {
    params.check()?;
    check_admissible(q0, params)?;
    let b = &q0.grid;
    let inv_d2 = params.ldg.inv_delta2();
    let rows: Vec<[f64; 2]> = (0..b.ns)
        .into_par_iter()
        .map(|i| -> Result<[f64; 2]> {
            let w = b.area_weight(i);
            let (mut bulk, mut surf) = (0.0, 0.0);
            for j in 0..b.nth {
                let nu = b.frame(i, j).nu;
                let input = RemnantInput::new(q0.surface_gradient(i, j), nu, params.elastic)?;
                let q = q0.get(i, j);
                bulk += f_e0(&input)? + inv_d2 * f_ldg(q, &params.ldg);
                surf += anchoring_terms(q, &nu, &params.anchoring).1;
            }
            Ok([w * bulk, w * surf])
        })
        .collect::<Result<_>>()?;
    let bulk: f64 = rows.iter().map(|r| r[0]).sum();
    let surf: f64 = rows.iter().map(|r| r[1]).sum();
    Ok(LimitEnergy {
        thickness_integrated: 2.0 * bulk + 2.0 * surf,
        per_unit_thickness: bulk + 2.0 * surf,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub eps: f64,
    pub f_eps: f64,
    pub f0: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaReport {
    pub rows: Vec<RateRow>,
    /// Least-squares slope of `log gap` against `log ε` over the rows above
    /// the rounding floor; `None` if fewer than two such rows.
    pub fitted_order: Option<f64>,
    pub monotone: bool,
    /// Rows whose gap fell below the rounding floor and were left out of
    /// the fit.
    pub below_floor: usize,
    pub limit: LimitEnergy,
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// `|F_ε[recovery] − F₀[Q₀]|` over a decreasing list of `ε` on a fixed
/// surface grid with `nt` intervals in `t`.
pub fn gamma_rate(q0: &SurfaceField, params: &FilmParams, eps_list: &[f64], nt: usize) -> Result<GammaReport> {
    if eps_list.is_empty() || eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidInput("epsilon list must be nonempty and strictly decreasing".into()));
    }
    let limit = limit_energy(q0, params)?;
    let f0 = limit.thickness_integrated;
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let field = build_recovery(q0, params, eps, nt)?;
        let fe = f_eps(&field, params)?;
        rows.push(RateRow { eps, f_eps: fe, f0, gap: (fe - f0).abs() });
    }
    let floor = 1e-12 * f0.abs().max(1.0);
    let valid: Vec<&RateRow> = rows.iter().filter(|r| r.gap > floor).collect();
    let below_floor = rows.len() - valid.len();
    if below_floor > 0 {
        log::warn!("{below_floor} gap(s) fell below the rounding floor {floor:e}");
    }
    let fitted_order = fit_slope(
        &valid.iter().map(|r| r.eps.ln()).collect::<Vec<_>>(),
        &valid.iter().map(|r| r.gap.ln()).collect::<Vec<_>>(),
    );
    let monotone = rows.windows(2).all(|w| w[1].gap < w[0].gap);
    Ok(GammaReport { rows, fitted_order, monotone, below_floor, limit })
}

pub fn write_rate_csv(report: &GammaReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["eps", "F_eps", "F0", "gap", "fitted_order"])?;
    let order = report.fitted_order.map(|o| o.to_string()).unwrap_or_default();
    let last = report.rows.len().saturating_sub(1);
    for (n, r) in report.rows.iter().enumerate() {
        let o = if n == last { order.as_str() } else { "" };
        w.write_record([&r.eps.to_string(), &r.f_eps.to_string(), &r.f0.to_string(), &r.gap.to_string(), o])?;
    }
    w.flush()?;
    Ok(())
}
