//! The limiting energy on a surface of revolution for equal elastic
//! constants, written in terms of `p = (p₁, p₂)`:
//!
//! ```text
//! Q = p₁(T⊗T − N⊗N) + p₂(T⊗N + N⊗T) + (3β/2)(ν⊗ν − I/3).
//! ```
//!
//! The discretization is a uniform `(s, θ)` grid, periodic in `θ`. First
//! differences live on grid edges (midpoint rule in `s`, trapezoid in `θ`
//! weighted by the trapezoid rule in `s`), pointwise terms on nodes, so the
//! discrete energy is second-order accurate, has no spurious null modes,
//! and yields natural boundary conditions at both orifices without extra
//! stencils. The gradient is assembled exactly.

use std::fs::File;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::elastic::LdGParams;
use crate::error::{Error, Result};
use crate::qtensor::{assemble_unchecked, Mat3};
use crate::surface::SurfaceOfRevolution;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryCondition {
    #[default]
    Natural,
    /// Values on the edge row are held at their initial values.
    Fixed,
}

/// `p` on an `ns × nθ` grid; row `i` is `s = s₀ + iΔs`, column `j` is
/// `θ = jΔθ` with `Δθ = 2π/nθ` (column `nθ` is column 0).
#[derive(Clone, Debug, PartialEq)]
pub struct PField {
    ns: usize,
    nth: usize,
    s0: f64,
    ds: f64,
    dth: f64,
    data: Vec<[f64; 2]>,
    pub bc: [BoundaryCondition; 2],
}

impl PField {
    pub fn new(ns: usize, nth: usize, s0: f64, length: f64) -> Result<Self> {
        if ns < 2 || nth < 3 || !(length > 0.0) {
            return Err(Error::InvalidInput(format!(
                "grid needs ns >= 2, ntheta >= 3 and positive length (got {ns}x{nth}, L={length})"
            )));
        }
        Ok(PField {
            ns,
            nth,
            s0,
            ds: length / (ns - 1) as f64,
            dth: std::f64::consts::TAU / nth as f64,
            data: vec![[0.0; 2]; ns * nth],
            bc: [BoundaryCondition::Natural; 2],
        })
    }

    /// Samples `f(s, θ)` on a grid covering the surface's parameter domain.
    pub fn from_fn(
        surface: &SurfaceOfRevolution,
        ns: usize,
        nth: usize,
        f: impl Fn(f64, f64) -> [f64; 2],
    ) -> Result<Self> {
        let mut field = PField::new(ns, nth, surface.s0(), surface.length())?;
        for i in 0..ns {
            for j in 0..nth {
                let (s, th) = (field.s(i), field.theta(j));
                field.data[i * nth + j] = f(s, th);
            }
        }
        Ok(field)
    }

    pub fn ns(&self) -> usize {
        self.ns
    }

    pub fn ntheta(&self) -> usize {
        self.nth
    }

    pub fn ds(&self) -> f64 {
        self.ds
    }

    pub fn dtheta(&self) -> f64 {
        self.dth
    }

    pub fn s(&self, i: usize) -> f64 {
        self.s0 + i as f64 * self.ds
    }

    pub fn theta(&self, j: usize) -> f64 {
        j as f64 * self.dth
    }

    pub fn get(&self, i: usize, j: usize) -> [f64; 2] {
        self.data[i * self.nth + j % self.nth]
    }

    pub fn set(&mut self, i: usize, j: usize, p: [f64; 2]) {
        self.data[i * self.nth + j % self.nth] = p;
    }

    pub fn values(&self) -> &[[f64; 2]] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [[f64; 2]] {
        &mut self.data
    }

    /// The field shifted by `m` grid cells in `θ`.
    pub fn shifted(&self, m: usize) -> PField {
        let mut out = self.clone();
        for i in 0..self.ns {
            for j in 0..self.nth {
                out.set(i, j + m, self.get(i, j));
            }
        }
        out
    }

    /// Director angle `ψ = ½ atan2(p₂, p₁)` at every node.
    pub fn director_angles(&self) -> Vec<f64> {
        self.data.iter().map(|p| 0.5 * p[1].atan2(p[0])).collect()
    }

    fn check_compatible(&self, surface: &SurfaceOfRevolution) -> Result<()> {
        let end = self.s(self.ns - 1);
        let tol = 1e-9 * surface.length().max(1.0);
        if (self.s0 - surface.s0()).abs() > tol || (end - surface.s1()).abs() > tol {
            return Err(Error::InvalidInput(format!(
                "field covers s in [{}, {end}] but the surface is [{}, {}]",
                self.s0,
                surface.s0(),
                surface.s1()
            )));
        }
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["s", "theta", "p1", "p2"])?;
        for i in 0..self.ns {
            for j in 0..self.nth {
                let p = self.get(i, j);
                w.serialize((self.s(i), self.theta(j), p[0], p[1]))?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a snapshot written by [`PField::write_csv`]; rows must be
    /// ordered by `s` then `θ`.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_reader(File::open(path)?);
        let rows: Vec<(f64, f64, f64, f64)> =
            r.deserialize().collect::<std::result::Result<_, _>>()?;
        let first = rows
            .first()
            .ok_or_else(|| Error::InvalidInput("empty field snapshot".into()))?;
        let nth = rows.iter().take_while(|r| r.0 == first.0).count();
        if nth == 0 || !rows.len().is_multiple_of(nth) {
            return Err(Error::InvalidInput("snapshot is not a full grid".into()));
        }
        let ns = rows.len() / nth;
        let length = rows.last().map(|r| r.0).unwrap_or(first.0) - first.0;
        let mut field = PField::new(ns, nth, first.0, length)?;
        for (k, row) in rows.iter().enumerate() {
            field.data[k] = [row.2, row.3];
        }
        Ok(field)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Stop when the sup-norm of the mass-lumped gradient is below this.
    pub gtol: f64,
    pub max_iter: usize,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo: f64,
    pub initial_step: f64,
    pub min_step: f64,
    pub record_history: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            gtol: 1e-8,
            max_iter: 1_000_000,
            armijo: 1e-4,
            initial_step: 1e-3,
            min_step: 1e-20,
            record_history: false,
        }
    }
}

pub const DEFAULT_GRID: (usize, usize) = (128, 256);

#[derive(Clone, Debug)]
pub struct ReducedConfig {
    pub surface: SurfaceOfRevolution,
    pub beta: f64,
    pub ldg: LdGParams,
    /// `(α₁, γ₁)`. The p-representation has `Qν = βν`, so this term
    /// vanishes identically; the weights are kept for completeness.
    pub anchoring1: Option<[f64; 2]>,
    pub solver: SolverOptions,
}

impl ReducedConfig {
    pub fn new(surface: SurfaceOfRevolution, beta: f64, ldg: LdGParams) -> Result<Self> {
        let cfg = ReducedConfig {
            surface,
            beta,
            ldg,
            anchoring1: None,
            solver: SolverOptions::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ldg.delta > 0.0) {
            return Err(Error::InvalidInput("delta must be positive".into()));
        }
        if !(-1.0 / 3.0..=2.0 / 3.0).contains(&self.beta) {
            return Err(Error::InvalidInput(format!("beta = {} outside [-1/3, 2/3]", self.beta)));
        }
        if let Some(w) = self.anchoring1 {
            if w.iter().any(|&x| !(x >= 0.0)) {
                return Err(Error::InvalidInput("anchoring weights must be nonnegative".into()));
            }
        }
        Ok(())
    }
}

/// `Q₁ = T⊗T − N⊗N`, `Q₂ = T⊗N + N⊗T`, `Q₃ = ν⊗N + N⊗ν`, `Q₄ = ν⊗T + T⊗ν`.
pub fn q_basis(surface: &SurfaceOfRevolution, s: f64, theta: f64) -> Result<[Mat3; 4]> {
    let f = surface.frame_at(s, theta)?;
    let sym = |a: &crate::qtensor::Vec3, b: &crate::qtensor::Vec3| a * b.transpose() + b * a.transpose();
    Ok([
        f.t * f.t.transpose() - f.n * f.n.transpose(),
        sym(&f.t, &f.n),
        sym(&f.nu, &f.n),
        sym(&f.nu, &f.t),
    ])
}

/// `Q_{,s}` and `Q_{,θ}` from `p` and its coordinate derivatives:
///
/// ```text
/// Q_{,s} = p₁ₛQ₁ + p₂ₛQ₂ + p₂φ′Q₃ + (p₁ − 3β/2)φ′Q₄
/// Q_{,θ} = (p₁θ − 2p₂cos φ)Q₁ + (p₂θ + 2p₁cos φ)Q₂ − (p₁ + 3β/2)sin φ Q₃ + p₂ sin φ Q₄
/// ```
pub fn q_derivatives(
    surface: &SurfaceOfRevolution,
    s: f64,
    theta: f64,
    p: [f64; 2],
    p_s: [f64; 2],
    p_theta: [f64; 2],
    beta: f64,
) -> Result<(Mat3, Mat3)> {
    let [q1, q2, q3, q4] = q_basis(surface, s, theta)?;
    let phi = surface.phi(s)?;
    let dphi = surface.profile().dphi(s);
    let (sp, cp) = phi.sin_cos();
    let qs = p_s[0] * q1 + p_s[1] * q2 + p[1] * dphi * q3 + (p[0] - 1.5 * beta) * dphi * q4;
    let qt = (p_theta[0] - 2.0 * p[1] * cp) * q1 + (p_theta[1] + 2.0 * p[0] * cp) * q2
        - (p[0] + 1.5 * beta) * sp * q3
        + p[1] * sp * q4;
    Ok((qs, qt))
}

/// `½|∇_M Q|²` without the purely geometric part:
///
/// ```text
/// |p_s|² + a₁⁻²|p_θ|² + (4cos φ/a₁²)(p₁p₂θ − p₂p₁θ)
///   + (4/a₁² − 3κ_N² + κ_T²)|p|² + 3βp₁(κ_N² − κ_T²).
/// ```
pub fn density_sr10(
    p: [f64; 2],
    p_s: [f64; 2],
    p_theta: [f64; 2],
    s: f64,
    surface: &SurfaceOfRevolution,
    beta: f64,
) -> Result<f64> {
    let a1 = surface.a1(s)?;
    let cp = surface.phi(s)?.cos();
    let c = surface.curvatures(s)?;
    let inv2 = 1.0 / (a1 * a1);
    let (kt2, kn2) = (c.kappa_t * c.kappa_t, c.kappa_n * c.kappa_n);
    let p2 = p[0] * p[0] + p[1] * p[1];
    Ok(p_s[0] * p_s[0]
        + p_s[1] * p_s[1]
        + inv2 * (p_theta[0] * p_theta[0] + p_theta[1] * p_theta[1])
        + 4.0 * cp * inv2 * (p[0] * p_theta[1] - p[1] * p_theta[0])
        + (4.0 * inv2 - 3.0 * kn2 + kt2) * p2
        + 3.0 * beta * p[0] * (kn2 - kt2))
}

/// The dropped geometric part `(9β²/4)(κ_T² + κ_N²)`.
pub fn geometric_offset(surface: &SurfaceOfRevolution, s: f64, beta: f64) -> Result<f64> {
    let c = surface.curvatures(s)?;
    Ok(2.25 * beta * beta * (c.kappa_t * c.kappa_t + c.kappa_n * c.kappa_n))
}

/// `(tr Q², tr Q³)` for the p-representation: `2|p|² + 3β²/2` and
/// `3β³/4 − 3β|p|²`.
pub fn invariants_from_p(p: [f64; 2], beta: f64) -> (f64, f64) {
    let r2 = p[0] * p[0] + p[1] * p[1];
    (2.0 * r2 + 1.5 * beta * beta, 0.75 * beta.powi(3) - 3.0 * beta * r2)
}

pub fn ldg_from_p(p: [f64; 2], beta: f64, ldg: &LdGParams) -> f64 {
    let (tr2, tr3) = invariants_from_p(p, beta);
    ldg.potential_raw(tr2, tr3) + ldg.offset
}

/// Derivative of the potential with respect to `|p|²`.
fn ldg_slope(p: [f64; 2], beta: f64, ldg: &LdGParams) -> f64 {
    let (tr2, _) = invariants_from_p(p, beta);
    4.0 * ldg.a - 4.0 * ldg.b * beta + 4.0 * tr2
}

/// Coefficients of one grid row.
#[derive(Clone, Copy, Debug)]
struct Row {
    /// Trapezoid weight times `Δs Δθ a₁`, the lumped mass.
    mass: f64,
    /// `Δs w / (a₁ Δθ)`.
    k_theta: f64,
    /// `4 Δs w cos φ / a₁`.
    k_cross: f64,
    /// `(Δθ/Δs) a₁(s + Δs/2)`, zero on the last row.
    k_s: f64,
    /// Coefficient of `|p|²`.
    c: f64,
    /// Coefficient of `p₁`.
    b: f64,
}

fn rows(field: &PField, cfg: &ReducedConfig) -> Result<Vec<Row>> {
    field.check_compatible(&cfg.surface)?;
    let surf = &cfg.surface;
    let (ds, dth) = (field.ds, field.dth);
    let last = field.ns - 1;
    (0..field.ns)
        .map(|i| {
            let s = field.s(i);
            let a1 = surf.a1(s.clamp(surf.s0(), surf.s1()))?;
            let sc = s.clamp(surf.s0(), surf.s1());
            let c = surf.curvatures(sc)?;
            let cp = surf.phi(sc)?.cos();
            let w = if i == 0 || i == last { 0.5 } else { 1.0 };
            let k_s = if i < last {
                let sh = (s + 0.5 * ds).clamp(surf.s0(), surf.s1());
                dth / ds * surf.a1(sh)?
            } else {
                0.0
            };
            let (kt2, kn2) = (c.kappa_t * c.kappa_t, c.kappa_n * c.kappa_n);
            Ok(Row {
                mass: w * ds * dth * a1,
                k_theta: ds * w / (a1 * dth),
                k_cross: 4.0 * ds * w * cp / a1,
                k_s,
                c: 4.0 / (a1 * a1) - 3.0 * kn2 + kt2,
                b: 3.0 * cfg.beta * (kn2 - kt2),
            })
        })
        .collect()
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn row_energy(field: &PField, cfg: &ReducedConfig, rows: &[Row], i: usize) -> f64 {
    let r = &rows[i];
    let nth = field.nth;
    let inv_d2 = cfg.ldg.inv_delta2();
    let mut e = 0.0;
    for j in 0..nth {
        let p = field.get(i, j);
        let q = field.get(i, j + 1);
        let d = [q[0] - p[0], q[1] - p[1]];
        e += r.k_theta * (d[0] * d[0] + d[1] * d[1]) + r.k_cross * cross(p, q);
        let r2 = p[0] * p[0] + p[1] * p[1];
        e += r.mass * (r.c * r2 + r.b * p[0] + inv_d2 * ldg_from_p(p, cfg.beta, &cfg.ldg));
        if i + 1 < field.ns {
            let u = field.get(i + 1, j);
            let d = [u[0] - p[0], u[1] - p[1]];
            e += r.k_s * (d[0] * d[0] + d[1] * d[1]);
        }
    }
    e
}

/// `E(new) − E(old)` for one row, with every term differenced in factored
/// form (`|b|² − |a|² = (b − a)·(b + a)` and so on) so that tiny decreases
/// are resolved far below the rounding level of the total energy.
fn row_energy_delta(old: &PField, new: &PField, cfg: &ReducedConfig, rows: &[Row], i: usize) -> f64 {
    let r = &rows[i];
    let nth = old.nth;
    let (a, b, beta) = (cfg.ldg.a, cfg.ldg.b, cfg.beta);
    let inv_d2 = cfg.ldg.inv_delta2();
    let sq_delta = |p0: [f64; 2], q0: [f64; 2], p1: [f64; 2], q1: [f64; 2]| {
        // |q1 − p1|² − |q0 − p0|², with the difference of the edge vectors
        // built from the nodal changes rather than from rounded edge vectors
        let d0 = [q0[0] - p0[0], q0[1] - p0[1]];
        let d1 = [q1[0] - p1[0], q1[1] - p1[1]];
        let dd = [(q1[0] - q0[0]) - (p1[0] - p0[0]), (q1[1] - q0[1]) - (p1[1] - p0[1])];
        dd[0] * (d1[0] + d0[0]) + dd[1] * (d1[1] + d0[1])
    };
    let mut e = 0.0;
    for j in 0..nth {
        let (p0, q0) = (old.get(i, j), old.get(i, j + 1));
        let (p1, q1) = (new.get(i, j), new.get(i, j + 1));
        let dp = [p1[0] - p0[0], p1[1] - p0[1]];
        let dq = [q1[0] - q0[0], q1[1] - q0[1]];
        e += r.k_theta * sq_delta(p0, q0, p1, q1);
        e += r.k_cross * (cross(dp, q1) + cross(p0, dq));
        let dr2 = dp[0] * (p1[0] + p0[0]) + dp[1] * (p1[1] + p0[1]);
        let (tr2_0, _) = invariants_from_p(p0, beta);
        let (tr2_1, _) = invariants_from_p(p1, beta);
        // potential is 2A tr2 + (4/3)B tr3 + tr2², with d tr2 = 2 dr2, d tr3 = −3β dr2
        let dpot = (4.0 * a - 4.0 * b * beta) * dr2 + 2.0 * dr2 * (tr2_1 + tr2_0);
        e += r.mass * (r.c * dr2 + r.b * dp[0] + inv_d2 * dpot);
        if i + 1 < old.ns {
            e += r.k_s * sq_delta(p0, old.get(i + 1, j), p1, new.get(i + 1, j));
        }
    }
    e
}

fn energy_delta(old: &PField, new: &PField, cfg: &ReducedConfig, rows: &[Row]) -> f64 {
    let parts: Vec<f64> = (0..old.ns)
        .into_par_iter()
        .map(|i| row_energy_delta(old, new, cfg, rows, i))
        .collect();
    parts.iter().sum()
}

/// Discrete limiting energy (sum over rows in a fixed order).
pub fn total_energy(field: &PField, cfg: &ReducedConfig) -> Result<f64> {
    let rows = rows(field, cfg)?;
    Ok(energy_with_rows(field, cfg, &rows))
}

fn energy_with_rows(field: &PField, cfg: &ReducedConfig, rows: &[Row]) -> f64 {
    let parts: Vec<f64> = (0..field.ns)
        .into_par_iter()
        .map(|i| row_energy(field, cfg, rows, i))
        .collect();
    parts.iter().sum()
}

fn gradient_with_rows(field: &PField, cfg: &ReducedConfig, rows: &[Row], out: &mut [[f64; 2]]) {
    let nth = field.nth;
    let ns = field.ns;
    let inv_d2 = cfg.ldg.inv_delta2();
    out.par_chunks_mut(nth).enumerate().for_each(|(i, g_row)| {
        let r = &rows[i];
        let fixed = (i == 0 && field.bc[0] == BoundaryCondition::Fixed)
            || (i == ns - 1 && field.bc[1] == BoundaryCondition::Fixed);
        for (j, g) in g_row.iter_mut().enumerate() {
            if fixed {
                *g = [0.0; 2];
                continue;
            }
            let p = field.get(i, j);
            let next = field.get(i, j + 1);
            let prev = field.get(i, j + nth - 1);
            let mut acc = [
                2.0 * r.k_theta * (2.0 * p[0] - next[0] - prev[0]),
                2.0 * r.k_theta * (2.0 * p[1] - next[1] - prev[1]),
            ];
            acc[0] += r.k_cross * (next[1] - prev[1]);
            acc[1] += r.k_cross * (prev[0] - next[0]);
            let slope = inv_d2 * ldg_slope(p, cfg.beta, &cfg.ldg);
            acc[0] += r.mass * (2.0 * (r.c + slope) * p[0] + r.b);
            acc[1] += r.mass * 2.0 * (r.c + slope) * p[1];
            if i + 1 < ns {
                let u = field.get(i + 1, j);
                acc[0] += 2.0 * r.k_s * (p[0] - u[0]);
                acc[1] += 2.0 * r.k_s * (p[1] - u[1]);
            }
            if i > 0 {
                let d = field.get(i - 1, j);
                let k = rows[i - 1].k_s;
                acc[0] += 2.0 * k * (p[0] - d[0]);
                acc[1] += 2.0 * k * (p[1] - d[1]);
            }
            *g = acc;
        }
    });
}

/// Energy and its exact gradient with respect to the nodal values (rows
/// with a fixed boundary condition get zero gradient).
pub fn energy_and_gradient(field: &PField, cfg: &ReducedConfig) -> Result<(f64, Vec<[f64; 2]>)> {
    let rows = rows(field, cfg)?;
    let mut g = vec![[0.0; 2]; field.data.len()];
    gradient_with_rows(field, cfg, &rows, &mut g);
    Ok((energy_with_rows(field, cfg, &rows), g))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowReport {
    pub iterations: usize,
    pub converged: bool,
    pub energy: f64,
    /// Sup-norm of the mass-lumped gradient at the returned field.
    pub grad_norm: f64,
    pub reason: String,
    pub energy_history: Vec<f64>,
}

/// Mass-lumped (L²) gradient descent with Barzilai–Borwein trial steps and
/// Armijo backtracking; every accepted step decreases the energy.
/// Non-convergence is reported in the returned [`FlowReport`].
pub fn gradient_flow_minimize(
    initial: &PField,
    cfg: &ReducedConfig,
) -> Result<(PField, f64, FlowReport)> {
    cfg.validate()?;
    let opts = cfg.solver;
    let rows = rows(initial, cfg)?;
    let nth = initial.nth;
    let inv_mass: Vec<f64> = (0..initial.data.len())
        .map(|k| 1.0 / rows[k / nth].mass)
        .collect();

    let mut x = initial.clone();
    let mut g = vec![[0.0; 2]; x.data.len()];
    gradient_with_rows(&x, cfg, &rows, &mut g);
    let mut e = energy_with_rows(&x, cfg, &rows);
    let mut trial = x.clone();
    let mut g_new = g.clone();
    let mut step = opts.initial_step;
    let mut history = Vec::new();
    if opts.record_history {
        history.push(e);
    }
    let sup = |g: &[[f64; 2]]| {
        g.iter()
            .zip(&inv_mass)
            .map(|(v, m)| (v[0] * m).abs().max((v[1] * m).abs()))
            .fold(0.0, f64::max)
    };
    let mut gnorm = sup(&g);
    let mut iter = 0;
    let reason;
    loop {
        if !e.is_finite() {
            return Err(Error::InvalidInput("energy is not finite".into()));
        }
        if gnorm <= opts.gtol {
            reason = "gradient tolerance reached".to_string();
            break;
        }
        if iter >= opts.max_iter {
            reason = "iteration budget exhausted".to_string();
            break;
        }
        let slope: f64 = g
            .iter()
            .zip(&inv_mass)
            .map(|(v, m)| (v[0] * v[0] + v[1] * v[1]) * m)
            .sum();
        let e_new = loop {
            for ((t, xv), (gv, m)) in trial
                .data
                .iter_mut()
                .zip(&x.data)
                .zip(g.iter().zip(&inv_mass))
            {
                t[0] = xv[0] - step * gv[0] * m;
                t[1] = xv[1] - step * gv[1] * m;
            }
            let de = energy_delta(&x, &trial, cfg, &rows);
            if de <= -opts.armijo * step * slope {
                break Some(e + de);
            }
            step *= 0.5;
            if step < opts.min_step {
                break None;
            }
        };
        let Some(e_new) = e_new else {
            reason = "line search stalled".to_string();
            break;
        };
        gradient_with_rows(&trial, cfg, &rows, &mut g_new);
        let (mut sms, mut sy) = (0.0, 0.0);
        for k in 0..x.data.len() {
            let m = rows[k / nth].mass;
            for c in 0..2 {
                let sk = trial.data[k][c] - x.data[k][c];
                sms += m * sk * sk;
                sy += sk * (g_new[k][c] - g[k][c]);
            }
        }
        step = if sy > 0.0 { sms / sy } else { 2.0 * step };
        step = step.clamp(opts.min_step, 1e20);
        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut g, &mut g_new);
        e = e_new;
        gnorm = sup(&g);
        iter += 1;
        if opts.record_history {
            history.push(e);
        }
    }
    let e = energy_with_rows(&x, cfg, &rows);
    let converged = gnorm <= opts.gtol;
    if !converged {
        log::warn!("gradient flow stopped after {iter} iterations: {reason} (|g| = {gnorm:e})");
    }
    let report = FlowReport {
        iterations: iter,
        converged,
        energy: e,
        grad_norm: gnorm,
        reason,
        energy_history: history,
    };
    Ok((x, e, report))
}

/// Winding of `p` around the parallel `s = s_i`, from accumulated angle
/// increments. Twice the winding of the director.
pub fn winding_number(field: &PField, s_index: usize, wtol: f64) -> Result<i32> {
    if s_index >= field.ns {
        return Err(Error::InvalidInput(format!(
            "row {s_index} outside grid with {} rows",
            field.ns
        )));
    }
    let min_modulus = (0..field.nth)
        .map(|j| {
            let p = field.get(s_index, j);
            p[0].hypot(p[1])
        })
        .fold(f64::INFINITY, f64::min);
    if !(min_modulus > wtol) {
        return Err(Error::UndefinedDegree {
            min_modulus,
            tol: wtol,
        });
    }
    let mut total = 0.0;
    for j in 0..field.nth {
        let a = field.get(s_index, j);
        let b = field.get(s_index, j + 1);
        total += cross(a, b).atan2(a[0] * b[0] + a[1] * b[1]);
    }
    Ok((total / std::f64::consts::TAU).round() as i32)
}

/// Checks the p-based potential against one evaluated on the assembled
/// tensor; returns the absolute difference.
pub fn ldg_consistency(
    p: [f64; 2],
    beta: f64,
    ldg: &LdGParams,
    frame: &crate::qtensor::Frame,
) -> f64 {
    let q = assemble_unchecked(p, beta, frame);
    (crate::elastic::f_ldg(&q, ldg) - ldg_from_p(p, beta, ldg)).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::BuiltinProfile;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{PI, TAU};

    fn frustum(phi0: f64, s0: f64, l: f64) -> SurfaceOfRevolution {
        SurfaceOfRevolution::builtin(BuiltinProfile::Frustum { phi0 }, s0, l).unwrap()
    }

    /// β = −1/3, B = 0, A = −13/6 puts the in-plane minimum at |p| = 1.
    fn unit_modulus_config(surface: SurfaceOfRevolution, delta: f64) -> ReducedConfig {
        ReducedConfig::new(surface, -1.0 / 3.0, LdGParams::new(-13.0 / 6.0, 0.0, delta).unwrap())
            .unwrap()
    }

    fn random_field(surface: &SurfaceOfRevolution, ns: usize, nth: usize, seed: u64) -> PField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = PField::from_fn(surface, ns, nth, |_, _| [0.0; 2]).unwrap();
        for v in f.values_mut() {
            *v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        }
        f
    }

    #[test]
    fn density_examples() {
        let phi0: f64 = 0.8;
        let surf = frustum(phi0, 1.0, 1.0);
        let beta = -1.0 / 3.0;
        let s = 1.3;
        let d = density_sr10([1.0, 0.0], [0.0; 2], [0.0; 2], s, &surf, beta).unwrap();
        let a1 = s * phi0.cos();
        let kn = phi0.tan() / s;
        let modulus_term = 4.0 / (a1 * a1) - 3.0 * kn * kn;
        assert_abs_diff_eq!(d - modulus_term, -(phi0.tan() / s).powi(2), epsilon = 1e-12);
        assert_eq!(density_sr10([0.0; 2], [0.0; 2], [0.0; 2], s, &surf, beta).unwrap(), 0.0);
    }

    #[test]
    fn density_matches_basis_expansion() {
        // ½|Q_s|² + ½a₁⁻²|Q_θ|² from the basis derivatives.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let surf = SurfaceOfRevolution::builtin(BuiltinProfile::SphereCap { radius: 1.5 }, 0.3, 2.0)
            .unwrap();
        for _ in 0..200 {
            let s = rng.gen_range(0.3..2.3);
            let th = rng.gen_range(0.0..TAU);
            let beta = rng.gen_range(-1.0 / 3.0..2.0 / 3.0);
            let mut r = || [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let (p, ps, pt) = (r(), r(), r());
            let (qs, qt) = q_derivatives(&surf, s, th, p, ps, pt, beta).unwrap();
            let a1 = surf.a1(s).unwrap();
            let direct = 0.5 * qs.norm_squared() + 0.5 * qt.norm_squared() / (a1 * a1);
            let reduced = density_sr10(p, ps, pt, s, &surf, beta).unwrap()
                + geometric_offset(&surf, s, beta).unwrap();
            assert_abs_diff_eq!(direct, reduced, epsilon = 1e-10);
        }
    }

    #[test]
    fn ldg_from_p_matches_assembled_tensor() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let surf = frustum(0.7, 1.0, 1.0);
        let ldg = LdGParams::new(-0.7, -1.1, 0.2).unwrap();
        for _ in 0..500 {
            let p = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let beta = rng.gen_range(-1.0 / 3.0..2.0 / 3.0);
            let frame = surf.frame_at(1.5, rng.gen_range(0.0..TAU)).unwrap().to_frame();
            let q = assemble_unchecked(p, beta, &frame);
            let (tr2, tr3) = invariants_from_p(p, beta);
            assert_abs_diff_eq!(q.tr2(), tr2, epsilon = 1e-12);
            assert_abs_diff_eq!(q.tr3(), tr3, epsilon = 1e-12);
            assert!(ldg_consistency(p, beta, &ldg, &frame) < 1e-10);
            // Qν = βν, so the first-order anchoring term vanishes
            let a = crate::elastic::AnchoringParams::new(0.0, 2.0, 0.0, 3.0, beta).unwrap();
            let (_, f1) = crate::elastic::f_s_split(&q, &frame.nu, &a).unwrap();
            assert!(f1 < 1e-24);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let surf = SurfaceOfRevolution::builtin(BuiltinProfile::SphereCap { radius: 1.2 }, 0.4, 1.5)
            .unwrap();
        let cfg = ReducedConfig::new(surf.clone(), 0.2, LdGParams::new(-0.5, -0.8, 0.3).unwrap())
            .unwrap();
        let mut field = random_field(&surf, 7, 9, 4);
        let (_, g) = energy_and_gradient(&field, &cfg).unwrap();
        let h = 1e-6;
        for k in 0..field.values().len() {
            for c in 0..2 {
                let orig = field.values()[k][c];
                field.values_mut()[k][c] = orig + h;
                let ep = total_energy(&field, &cfg).unwrap();
                field.values_mut()[k][c] = orig - h;
                let em = total_energy(&field, &cfg).unwrap();
                field.values_mut()[k][c] = orig;
                let fd = (ep - em) / (2.0 * h);
                assert!(
                    (fd - g[k][c]).abs() <= 1e-6 * g[k][c].abs().max(1.0),
                    "node {k}.{c}: fd {fd} vs {}",
                    g[k][c]
                );
            }
        }
    }

    #[test]
    fn energy_delta_matches_difference() {
        let surf = frustum(0.8, 1.0, 1.0);
        let cfg = ReducedConfig::new(surf.clone(), 0.1, LdGParams::new(-0.9, -0.4, 0.3).unwrap())
            .unwrap();
        let a = random_field(&surf, 6, 10, 20);
        let b = random_field(&surf, 6, 10, 21);
        let rows = rows(&a, &cfg).unwrap();
        let direct = total_energy(&b, &cfg).unwrap() - total_energy(&a, &cfg).unwrap();
        assert_abs_diff_eq!(energy_delta(&a, &b, &cfg, &rows), direct, epsilon = 1e-10);
    }

    #[test]
    fn energy_delta_resolves_last_bit_moves() {
        let surf = frustum(0.6, 1.0, 1.0);
        let cfg = unit_modulus_config(surf.clone(), 0.2);
        let a = random_field(&surf, 6, 10, 30);
        let rows = rows(&a, &cfg).unwrap();
        let mut g = vec![[0.0; 2]; a.data.len()];
        gradient_with_rows(&a, &cfg, &rows, &mut g);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut b = a.clone();
        for v in b.data.iter_mut() {
            for c in v.iter_mut() {
                let bits = c.to_bits();
                *c = f64::from_bits(if rng.gen_bool(0.5) { bits + 1 } else { bits - 1 });
            }
        }
        let (mut lin, mut scale) = (0.0, 0.0);
        for k in 0..a.data.len() {
            for c in 0..2 {
                let d = (b.data[k][c] - a.data[k][c]) * g[k][c];
                lin += d;
                scale += d.abs();
            }
        }
        let de = energy_delta(&a, &b, &cfg, &rows);
        assert!((de - lin).abs() <= 1e-6 * scale, "{de:e} vs {lin:e}");
    }

    #[test]
    fn fixed_rows_have_zero_gradient() {
        let surf = frustum(0.5, 1.0, 1.0);
        let cfg = unit_modulus_config(surf.clone(), 0.5);
        let mut field = random_field(&surf, 5, 8, 5);
        field.bc = [BoundaryCondition::Fixed, BoundaryCondition::Natural];
        let (_, g) = energy_and_gradient(&field, &cfg).unwrap();
        assert!(g[..8].iter().all(|v| *v == [0.0; 2]));
        assert!(g[32..].iter().any(|v| *v != [0.0; 2]));
    }

    #[test]
    fn zero_field_energy() {
        let surf = frustum(0.5, 1.0, 1.0);
        let ldg = LdGParams::new(0.5, 0.0, 1.0).unwrap();
        let cfg = ReducedConfig::new(surf.clone(), 0.0, ldg).unwrap();
        let field = PField::from_fn(&surf, 9, 16, |_, _| [0.0; 2]).unwrap();
        assert_eq!(total_energy(&field, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn frustum_curvature_term_quadrature() {
        let phi0: f64 = 0.9;
        let (s0, l) = (1.0, 1.5);
        let surf = frustum(phi0, s0, l);
        let cfg = unit_modulus_config(surf.clone(), 0.01);
        let exact_curv = -TAU * phi0.sin() * phi0.tan() * ((s0 + l) / s0).ln();
        // ∫(4/a₁² − 3κ_N²)a₁ = 2π (1 + 3cos²φ₀)/cos φ₀ · ln(s₁/s₀)
        let exact_modulus =
            TAU * (1.0 + 3.0 * phi0.cos().powi(2)) / phi0.cos() * ((s0 + l) / s0).ln();
        let mut errs = vec![];
        for ns in [17, 33, 65] {
            let field = PField::from_fn(&surf, ns, 32, |_, _| [1.0, 0.0]).unwrap();
            let e = total_energy(&field, &cfg).unwrap();
            errs.push((e - exact_curv - exact_modulus).abs());
        }
        assert!(errs[2] < 1e-3);
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
        }
    }

    #[test]
    fn refinement_is_second_order() {
        let surf = SurfaceOfRevolution::builtin(BuiltinProfile::SphereCap { radius: 2.0 }, 0.5, 1.5)
            .unwrap();
        let cfg = ReducedConfig::new(surf.clone(), 0.1, LdGParams::new(-0.5, -0.3, 0.5).unwrap())
            .unwrap();
        let f = |s: f64, th: f64| [0.5 + 0.2 * (s + th.sin()).cos(), 0.3 * (2.0 * th).sin() + 0.1 * s];
        let e: Vec<f64> = [(9, 16), (17, 32), (33, 64), (65, 128)]
            .iter()
            .map(|&(ns, nt)| total_energy(&PField::from_fn(&surf, ns, nt, f).unwrap(), &cfg).unwrap())
            .collect();
        let r1 = (e[0] - e[1]) / (e[1] - e[2]);
        let r2 = (e[1] - e[2]) / (e[2] - e[3]);
        assert!((r1 - 4.0).abs() < 0.5 && (r2 - 4.0).abs() < 0.3, "{r1} {r2}");
    }

    #[test]
    fn flow_is_monotone_and_converges_on_flat_annulus() {
        let surf = SurfaceOfRevolution::builtin(BuiltinProfile::PlaneAnnulus, 1.0, 1.0).unwrap();
        let mut cfg = unit_modulus_config(surf.clone(), 0.3);
        cfg.solver.gtol = 1e-7;
        cfg.solver.max_iter = 20_000;
        cfg.solver.record_history = true;
        // plane: the p-frame rotates with θ, so a uniform director is
        // p = (cos 2θ, −sin 2θ) up to a constant rotation
        let init = PField::from_fn(&surf, 9, 32, |s, th| {
            let a = -2.0 * th + 0.3 * (s - 1.5);
            [0.7 * a.cos(), 0.7 * a.sin()]
        })
        .unwrap();
        let (out, e, rep) = gradient_flow_minimize(&init, &cfg).unwrap();
        assert!(rep.converged, "{rep:?}");
        assert!(rep.energy_history.windows(2).all(|w| w[1] <= w[0]));
        let uniform = PField::from_fn(&surf, 9, 32, |_, th| {
            let a = -2.0 * th;
            [a.cos(), a.sin()]
        })
        .unwrap();
        let e_uniform = total_energy(&uniform, &cfg).unwrap();
        assert!(e <= e_uniform + 1e-9);
        assert_eq!(winding_number(&out, 4, 1e-3).unwrap(), -2);
    }

    #[test]
    fn flow_is_shift_equivariant() {
        let surf = frustum(0.6, 1.0, 1.0);
        let mut cfg = unit_modulus_config(surf.clone(), 0.4);
        cfg.solver.gtol = 1e-9;
        cfg.solver.max_iter = 20_000;
        let init = random_field(&surf, 6, 12, 8);
        let (a, ea, _) = gradient_flow_minimize(&init, &cfg).unwrap();
        let (b, eb, _) = gradient_flow_minimize(&init.shifted(5), &cfg).unwrap();
        assert_abs_diff_eq!(
            total_energy(&init, &cfg).unwrap(),
            total_energy(&init.shifted(5), &cfg).unwrap(),
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(ea, eb, epsilon = 1e-9);
        let sa = a.shifted(5);
        let diff = sa
            .values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (x[0] - y[0]).abs().max((x[1] - y[1]).abs()))
            .fold(0.0, f64::max);
        assert!(diff < 1e-5, "{diff}");
    }

    #[test]
    fn winding_examples() {
        let surf = frustum(0.6, 1.0, 1.0);
        for (k, expect) in [(0, 0), (1, 1), (-1, -1), (3, 3)] {
            let f = PField::from_fn(&surf, 3, 64, |_, th| {
                let a = k as f64 * th;
                [a.cos(), a.sin()]
            })
            .unwrap();
            assert_eq!(winding_number(&f, 1, 1e-3).unwrap(), expect);
        }
        let f = PField::from_fn(&surf, 3, 64, |_, th| [0.3 + 0.5 * th.cos(), 0.5 * th.sin()]).unwrap();
        assert_eq!(winding_number(&f, 0, 1e-3).unwrap(), 1);
        let f = PField::from_fn(&surf, 3, 64, |_, _| [0.0, 0.0]).unwrap();
        assert!(matches!(
            winding_number(&f, 0, 1e-3),
            Err(Error::UndefinedDegree { .. })
        ));
    }

    #[test]
    fn winding_stable_under_refinement() {
        let surf = frustum(0.6, 1.0, 1.0);
        let f = |_: f64, th: f64| {
            let a = -th + 0.4 * (3.0 * th).sin();
            [a.cos(), a.sin()]
        };
        for nth in [16, 32, 64, 128, 256] {
            let field = PField::from_fn(&surf, 3, nth, f).unwrap();
            assert_eq!(winding_number(&field, 1, 1e-3).unwrap(), -1);
        }
    }

    #[test]
    fn csv_round_trip() {
        let surf = frustum(0.6, 1.0, 1.0);
        let f = random_field(&surf, 4, 6, 9);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.csv");
        f.write_csv(&path).unwrap();
        let g = PField::read_csv(&path).unwrap();
        assert_eq!((g.ns(), g.ntheta()), (4, 6));
        assert_eq!(f.values(), g.values());
        assert_abs_diff_eq!(g.ds(), f.ds(), epsilon = 1e-15);
    }

    #[test]
    fn incompatible_grid_is_rejected() {
        let surf = frustum(0.6, 1.0, 1.0);
        let cfg = unit_modulus_config(surf.clone(), 0.5);
        let other = frustum(0.6, 1.0, 2.0);
        let f = PField::from_fn(&other, 4, 8, |_, _| [1.0, 0.0]).unwrap();
        assert!(total_energy(&f, &cfg).is_err());
        let _ = PI;
    }
}
