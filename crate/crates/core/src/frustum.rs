//! The one-dimensional director problem on a frustum `a₁ = s cos φ₀`.
//!
//! With `|p| = 1` and `ψ` independent of `s`, the limiting energy reduces to
//! `(∫ ds/a₁) F[ψ]` with
//!
//! ```text
//! F[ψ] = ∫₀^{2π} 4ψ′² + 8 cos φ₀ ψ′ − sin²φ₀ cos 2ψ  dθ,
//! ```
//!
//! minimized over the sectors `ψ(2π) = ψ(0) + πk`. Stationary points solve
//! the pendulum equation `ψ″ = (sin²φ₀/4) sin 2ψ`.
//!
//! Discretely, `ψⱼ = kθⱼ/2 + uⱼ` on `N` uniform nodes with `u` periodic,
//! differences are forward differences closed by `ψ_N = ψ₀ + πk`, and the
//! linear term telescopes to exactly `8πk cos φ₀`.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surface::{BuiltinProfile, SurfaceOfRevolution};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrustumGeometry {
    pub phi0: f64,
    pub s0: f64,
    pub length: f64,
}

impl FrustumGeometry {
    pub fn new(phi0: f64, s0: f64, length: f64) -> Result<Self> {
        if !(phi0 > 0.0 && phi0 <= PI / 2.0 + 1e-15) {
            return Err(Error::InvalidInput(format!("phi0 = {phi0} outside (0, pi/2]")));
        }
        if !(s0 > 0.0) || !(length > 0.0) {
            return Err(Error::InvalidInput("frustum needs s0 > 0 and L > 0".into()));
        }
        Ok(FrustumGeometry { phi0, s0, length })
    }

    /// A frustum on `s ∈ [1, 2]`; the sector problem does not depend on it.
    pub fn unit(phi0: f64) -> Result<Self> {
        Self::new(phi0, 1.0, 1.0)
    }

    pub fn surface(&self) -> Result<SurfaceOfRevolution> {
        SurfaceOfRevolution::builtin(BuiltinProfile::Frustum { phi0: self.phi0 }, self.s0, self.length)
    }

    /// `∫ ds/a₁ = ln((s₀ + L)/s₀) / cos φ₀`, infinite for the cylinder limit.
    pub fn inverse_radius_integral(&self) -> f64 {
        ((self.s0 + self.length) / self.s0).ln() / self.phi0.cos()
    }

    fn sin2(&self) -> f64 {
        self.phi0.sin().powi(2)
    }
}

/// `ψ` on `N` uniform nodes of `[0, 2π)`, stored as `ψⱼ = kθⱼ/2 + uⱼ`.
#[derive(Clone, Debug, PartialEq)]
pub struct PsiProfile {
    k: i32,
    u: Vec<f64>,
}

impl PsiProfile {
    pub fn new(k: i32, u: Vec<f64>) -> Result<Self> {
        if u.len() < 3 {
            return Err(Error::InvalidInput("profile needs at least 3 nodes".into()));
        }
        Ok(PsiProfile { k, u })
    }

    /// The linear profile `ψ = kθ/2`.
    pub fn linear(k: i32, n: usize) -> Result<Self> {
        Self::new(k, vec![0.0; n])
    }

    /// Builds the profile from nodal values `ψⱼ`.
    pub fn from_values(k: i32, psi: &[f64]) -> Result<Self> {
        let n = psi.len();
        let dth = TAU / n as f64;
        let u = psi
            .iter()
            .enumerate()
            .map(|(j, p)| p - 0.5 * k as f64 * j as f64 * dth)
            .collect();
        Self::new(k, u)
    }

    pub fn k(&self) -> i32 {
        self.k
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn dtheta(&self) -> f64 {
        TAU / self.u.len() as f64
    }

    pub fn periodic_part(&self) -> &[f64] {
        &self.u
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.u.len()).map(|j| self.psi(j)).collect()
    }

    /// `ψ` at node `j`, with `ψ_{j+N} = ψⱼ + πk`.
    pub fn psi(&self, j: usize) -> f64 {
        let n = self.u.len();
        let (wraps, jj) = (j / n, j % n);
        0.5 * self.k as f64 * jj as f64 * self.dtheta() + self.u[jj] + PI * (self.k as f64) * wraps as f64
    }

    /// `ψ(θ + 2π) − ψ(θ)`, which is `πk` by construction.
    pub fn jump(&self) -> f64 {
        self.psi(self.len()) - self.psi(0)
    }

    /// Adds `π` at every node (the same nematic state).
    pub fn flipped(&self) -> PsiProfile {
        PsiProfile {
            k: self.k,
            u: self.u.iter().map(|x| x + PI).collect(),
        }
    }
}

/// `Σⱼ Δθ [4 (Δψ/Δθ)² + 8 cos φ₀ Δψ/Δθ − sin²φ₀ cos 2ψⱼ]`.
pub fn e0_energy(psi: &PsiProfile, geom: &FrustumGeometry) -> f64 {
    let n = psi.len();
    let dth = psi.dtheta();
    let (c, s2) = (geom.phi0.cos(), geom.sin2());
    (0..n)
        .map(|j| {
            let d = (psi.psi(j + 1) - psi.psi(j)) / dth;
            dth * (4.0 * d * d + 8.0 * c * d - s2 * (2.0 * psi.psi(j)).cos())
        })
        .sum()
}

/// The same energy in the form `8πk cos φ₀ + Σⱼ Δθ [4 (Δψ/Δθ)² − sin²φ₀ cos 2ψⱼ]`.
pub fn e0_energy_sector_form(psi: &PsiProfile, geom: &FrustumGeometry) -> f64 {
    let n = psi.len();
    let dth = psi.dtheta();
    let s2 = geom.sin2();
    let rest: f64 = (0..n)
        .map(|j| {
            let d = (psi.psi(j + 1) - psi.psi(j)) / dth;
            dth * (4.0 * d * d - s2 * (2.0 * psi.psi(j)).cos())
        })
        .sum();
    8.0 * PI * psi.k() as f64 * geom.phi0.cos() + rest
}

/// The limiting energy `(∫ ds/a₁) F[ψ]` of the `s`-independent state.
pub fn e0_total(psi: &PsiProfile, geom: &FrustumGeometry) -> f64 {
    geom.inverse_radius_integral() * e0_energy(psi, geom)
}

/// Gradient of [`e0_energy`] with respect to the nodal values.
fn gradient(psi: &PsiProfile, geom: &FrustumGeometry) -> Vec<f64> {
    let n = psi.len();
    let dth = psi.dtheta();
    let s2 = geom.sin2();
    (0..n)
        .map(|j| {
            let prev = psi.psi(j + n - 1) - PI * psi.k() as f64;
            let lap = (psi.psi(j + 1) - 2.0 * psi.psi(j) + prev) / (dth * dth);
            dth * (2.0 * s2 * (2.0 * psi.psi(j)).sin() - 8.0 * lap)
        })
        .collect()
}

/// `maxⱼ |ψ″ − (sin²φ₀/4) sin 2ψ|` with the centered second difference.
pub fn el_residual(psi: &PsiProfile, geom: &FrustumGeometry) -> f64 {
    let dth = psi.dtheta();
    gradient(psi, geom)
        .iter()
        .map(|g| (g / (8.0 * dth)).abs())
        .fold(0.0, f64::max)
}

/// `E(b) − E(a)` with every term differenced in factored form.
fn energy_delta(a: &PsiProfile, b: &PsiProfile, geom: &FrustumGeometry) -> f64 {
    let n = a.len();
    let dth = a.dtheta();
    let s2 = geom.sin2();
    (0..n)
        .map(|j| {
            let da = a.psi(j + 1) - a.psi(j);
            let db = b.psi(j + 1) - b.psi(j);
            let (pa, pb) = (a.psi(j), b.psi(j));
            // cos 2b − cos 2a = −2 sin(b + a) sin(b − a); the linear term telescopes
            4.0 * (db - da) * (db + da) / dth
                + dth * s2 * 2.0 * (pb + pa).sin() * (pb - pa).sin()
        })
        .sum()
}

/// Hessian of [`e0_energy`]: `Δθ 4 sin²φ₀ cos 2ψⱼ` on the diagonal plus
/// `8/Δθ` times the periodic second-difference matrix.
fn hessian(psi: &PsiProfile, geom: &FrustumGeometry) -> DMatrix<f64> {
    let n = psi.len();
    let dth = psi.dtheta();
    let s2 = geom.sin2();
    let mut h = DMatrix::zeros(n, n);
    for j in 0..n {
        h[(j, j)] = dth * 4.0 * s2 * (2.0 * psi.psi(j)).cos() + 16.0 / dth;
        h[(j, (j + 1) % n)] -= 8.0 / dth;
        h[(j, (j + n - 1) % n)] -= 8.0 / dth;
    }
    h
}

/// Newton iterations from a point near a local minimum. Gives up (returns
/// `None`) if the Hessian is not positive definite or the energy rises.
fn newton_polish(start: &PsiProfile, geom: &FrustumGeometry, rtol: f64) -> Option<(PsiProfile, f64)> {
    let mut x = start.clone();
    let mut r = el_residual(&x, geom);
    for _ in 0..30 {
        if r <= rtol {
            break;
        }
        let g = DVector::from_vec(gradient(&x, geom));
        let step = hessian(&x, geom).cholesky()?.solve(&(-g));
        let mut trial = x.clone();
        for (t, d) in trial.u.iter_mut().zip(step.iter()) {
            *t += d;
        }
        let scale = e0_energy(&x, geom).abs().max(1.0);
        if energy_delta(&x, &trial, geom) > 1e-13 * scale {
            return None;
        }
        let rt = el_residual(&trial, geom);
        if !(rt < r) {
            break;
        }
        x = trial;
        r = rt;
    }
    Some((x, r))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SectorOptions {
    /// Number of nodes on `[0, 2π)`.
    pub n: usize,
    /// Target for the Euler–Lagrange residual.
    pub rtol: f64,
    pub max_iter: usize,
    /// Number of starts: `u ≡ 0` plus `starts − 1` random smooth perturbations.
    pub starts: usize,
    pub seed: u64,
    pub perturbation: f64,
}

impl Default for SectorOptions {
    fn default() -> Self {
        SectorOptions {
            n: 256,
            rtol: 1e-9,
            max_iter: 100_000,
            starts: 5,
            seed: 0,
            perturbation: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SectorResult {
    pub k: i32,
    pub profile: PsiProfile,
    pub energy: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// BB/Armijo descent on the periodic part from one starting profile.
fn descend(start: PsiProfile, geom: &FrustumGeometry, opts: &SectorOptions) -> SectorResult {
    let dth = start.dtheta();
    let n = start.len();
    let mut x = start;
    let mut g = gradient(&x, geom);
    let mut e = e0_energy(&x, geom);
    let mut step = 1e-2;
    let mut iter = 0;
    let resid = |g: &[f64]| g.iter().map(|v| (v / (8.0 * dth)).abs()).fold(0.0, f64::max);
    let mut r = resid(&g);
    while r > opts.rtol && iter < opts.max_iter {
        // L² gradient g/Δθ
        let slope: f64 = g.iter().map(|v| v * v / dth).sum();
        let mut trial = x.clone();
        let accepted = loop {
            for (t, (xv, gv)) in trial.u.iter_mut().zip(x.u.iter().zip(&g)) {
                *t = xv - step * gv / dth;
            }
            let de = energy_delta(&x, &trial, geom);
            if de <= -1e-4 * step * slope {
                break Some(de);
            }
            step *= 0.5;
            if step < 1e-20 {
                break None;
            }
        };
        let Some(de) = accepted else { break };
        let g_new = gradient(&trial, geom);
        let (mut ss, mut sy) = (0.0, 0.0);
        for j in 0..n {
            let sj = trial.u[j] - x.u[j];
            ss += dth * sj * sj;
            sy += sj * (g_new[j] - g[j]);
        }
        step = if sy > 0.0 { ss / sy } else { 2.0 * step };
        step = step.clamp(1e-20, 1e20);
        x = trial;
        g = g_new;
        e += de;
        r = resid(&g);
        iter += 1;
    }
    let _ = e;
    if r > opts.rtol {
        if let Some((polished, rp)) = newton_polish(&x, geom, opts.rtol) {
            x = polished;
            r = rp;
        }
    }
    SectorResult {
        k: x.k,
        energy: e0_energy(&x, geom),
        residual: r,
        iterations: iter,
        converged: r <= opts.rtol,
        profile: x,
    }
}

/// Minimizes `F` over the sector `D_k` from several starts and returns the
/// lowest converged result (or the lowest overall if none converged).
pub fn minimize_in_sector(k: i32, geom: &FrustumGeometry, opts: &SectorOptions) -> Result<SectorResult> {
    if opts.n < 64 {
        return Err(Error::InvalidInput(format!("sector problem needs N >= 64 (got {})", opts.n)));
    }
    let n = opts.n;
    let dth = TAU / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (k as i64 as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut best: Option<SectorResult> = None;
    for start in 0..opts.starts.max(1) {
        let u: Vec<f64> = if start == 0 {
            vec![0.0; n]
        } else {
            let modes: Vec<(f64, f64)> = (1..=3)
                .map(|_| (rng.gen_range(-1.0..1.0) * opts.perturbation, rng.gen_range(0.0..TAU)))
                .collect();
            (0..n)
                .map(|j| {
                    let th = j as f64 * dth;
                    modes
                        .iter()
                        .enumerate()
                        .map(|(m, (a, c))| a * ((m + 1) as f64 * th + c).cos())
                        .sum()
                })
                .collect()
        };
        let res = descend(PsiProfile { k, u }, geom, opts);
        let better = match &best {
            None => true,
            Some(b) => (res.converged && !b.converged) || (res.converged == b.converged && res.energy < b.energy),
        };
        if better {
            best = Some(res);
        }
    }
    let best = best.expect("at least one start");
    if !best.converged {
        log::warn!(
            "sector k={k} at phi0={} did not converge: residual {:e}",
            geom.phi0,
            best.residual
        );
    }
    Ok(best)
}

/// Sector minima for each `k` at fixed `φ₀`, in the order given.
pub fn sector_compare(geom: &FrustumGeometry, ks: &[i32], opts: &SectorOptions) -> Result<Vec<SectorResult>> {
    if ks.is_empty() {
        return Err(Error::InvalidInput("no sectors requested".into()));
    }
    ks.par_iter().map(|&k| minimize_in_sector(k, geom, opts)).collect()
}

/// `min_{D₋₁} F − min_{D₀} F` at `φ₀`.
pub fn sector_gap(phi0: f64, opts: &SectorOptions) -> Result<f64> {
    let geom = FrustumGeometry::unit(phi0)?;
    let r = sector_compare(&geom, &[-1, 0], opts)?;
    Ok(r[0].energy - r[1].energy)
}

/// Bisects for the angle where the `k = −1` and `k = 0` minima cross.
pub fn critical_angle(lo: f64, hi: f64, tol: f64, opts: &SectorOptions) -> Result<f64> {
    let (mut lo, mut hi) = (lo, hi);
    let (mut f_lo, f_hi) = (sector_gap(lo, opts)?, sector_gap(hi, opts)?);
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::Bracketing { lo, hi, f_lo, f_hi });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let f_mid = sector_gap(mid, opts)?;
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One `(φ₀, k)` entry of a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub phi0: f64,
    pub k: i32,
    pub energy: f64,
    pub el_residual: f64,
    pub n_iters: usize,
    pub converged: bool,
}

/// Sector minima over a grid of angles; rows ordered by angle then `k`.
pub fn sweep(phis: &[f64], ks: &[i32], opts: &SectorOptions) -> Result<Vec<SweepRow>> {
    let jobs: Vec<(f64, i32)> = phis.iter().flat_map(|&p| ks.iter().map(move |&k| (p, k))).collect();
    jobs.par_iter()
        .map(|&(phi0, k)| {
            let geom = FrustumGeometry::unit(phi0)?;
            let r = minimize_in_sector(k, &geom, opts)?;
            Ok(SweepRow {
                phi0,
                k,
                energy: r.energy,
                el_residual: r.residual,
                n_iters: r.iterations,
                converged: r.converged,
            })
        })
        .collect()
}

/// Writes sweep rows followed by a summary row carrying the critical angle
/// (`k` empty, `energy` holding the angle).
pub fn write_sweep_csv(rows: &[SweepRow], critical: Option<f64>, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["phi0", "k", "energy", "el_residual", "n_iters", "converged"])?;
    for r in rows {
        w.write_record([
            r.phi0.to_string(),
            r.k.to_string(),
            r.energy.to_string(),
            r.el_residual.to_string(),
            r.n_iters.to_string(),
            r.converged.to_string(),
        ])?;
    }
    if let Some(c) = critical {
        w.write_record(["critical_angle", "", &c.to_string(), "", "", ""])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn opts() -> SectorOptions {
        SectorOptions {
            n: 128,
            starts: 3,
            ..SectorOptions::default()
        }
    }

    #[test]
    fn energy_examples() {
        for phi0 in [0.3, 0.9, 1.4] {
            let g = FrustumGeometry::unit(phi0).unwrap();
            let s2 = phi0.sin().powi(2);
            let zero = PsiProfile::linear(0, 128).unwrap();
            assert_abs_diff_eq!(e0_energy(&zero, &g), -TAU * s2, epsilon = 1e-12);
            let half = PsiProfile::from_values(0, &[PI / 2.0; 128]).unwrap();
            assert_abs_diff_eq!(e0_energy(&half, &g), TAU * s2, epsilon = 1e-12);
            let lin = PsiProfile::linear(-1, 256).unwrap();
            assert_abs_diff_eq!(
                e0_energy(&lin, &g),
                TAU - 8.0 * PI * phi0.cos(),
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn two_forms_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in -3..=2 {
            let u: Vec<f64> = (0..100).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let p = PsiProfile::new(k, u).unwrap();
            let g = FrustumGeometry::unit(0.8).unwrap();
            assert_abs_diff_eq!(e0_energy(&p, &g), e0_energy_sector_form(&p, &g), epsilon = 1e-9);
            assert_abs_diff_eq!(p.jump(), PI * k as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn head_tail_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = FrustumGeometry::unit(1.1).unwrap();
        let u: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let p = PsiProfile::new(0, u).unwrap();
        assert_abs_diff_eq!(e0_energy(&p, &g), e0_energy(&p.flipped(), &g), epsilon = 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = FrustumGeometry::unit(0.7).unwrap();
        let u: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let p = PsiProfile::new(-1, u).unwrap();
        let grad = gradient(&p, &g);
        let h = 1e-6;
        for j in 0..64 {
            let mut a = p.clone();
            a.u[j] += h;
            let mut b = p.clone();
            b.u[j] -= h;
            let fd = (e0_energy(&a, &g) - e0_energy(&b, &g)) / (2.0 * h);
            assert!((fd - grad[j]).abs() < 1e-6 * grad[j].abs().max(1.0));
            assert_abs_diff_eq!(energy_delta(&b, &a, &g), e0_energy(&a, &g) - e0_energy(&b, &g), epsilon = 1e-12);
        }
    }

    #[test]
    fn sector_zero_is_constant_state() {
        for phi0 in [0.2, 0.8, 1.5] {
            let g = FrustumGeometry::unit(phi0).unwrap();
            let r = minimize_in_sector(0, &g, &opts()).unwrap();
            assert!(r.converged);
            assert_abs_diff_eq!(r.energy, -TAU * phi0.sin().powi(2), epsilon = 1e-9);
            let v = r.profile.values();
            // ψ ≡ 0 mod π
            for x in v {
                let m = (x / PI).round();
                assert!((x - m * PI).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn sector_minus_one_bounds() {
        let g = FrustumGeometry::unit(PI / 2.0).unwrap();
        let r = minimize_in_sector(-1, &g, &opts()).unwrap();
        assert!(r.energy >= 0.0);
        assert!(r.residual <= 1e-6);
        let g = FrustumGeometry::unit(1.0).unwrap();
        let r = minimize_in_sector(-1, &g, &opts()).unwrap();
        assert!(r.energy <= TAU - 8.0 * PI * 1.0_f64.cos());
        assert!(r.converged);
    }

    #[test]
    fn minimum_below_linear_profile() {
        let g = FrustumGeometry::unit(0.6).unwrap();
        for k in [-3, -2, -1, 0, 1] {
            let r = minimize_in_sector(k, &g, &opts()).unwrap();
            let lin = e0_energy(&PsiProfile::linear(k, 128).unwrap(), &g);
            assert!(r.energy <= lin + 1e-12);
            assert!(r.residual <= 1e-6);
        }
    }

    #[test]
    fn sector_minima_converge_at_second_order() {
        let g = FrustumGeometry::unit(0.9).unwrap();
        let e: Vec<f64> = [64, 128, 256, 512]
            .iter()
            .map(|&n| minimize_in_sector(-1, &g, &SectorOptions { n, starts: 1, ..opts() }).unwrap().energy)
            .collect();
        let r1 = (e[0] - e[1]) / (e[1] - e[2]);
        let r2 = (e[1] - e[2]) / (e[2] - e[3]);
        assert!((r1 - 4.0).abs() < 0.5 && (r2 - 4.0).abs() < 0.5, "{r1} {r2}");
    }

    #[test]
    fn residual_under_refinement() {
        // the pendulum residual of a fixed smooth profile decays at second order
        let g = FrustumGeometry::unit(0.9).unwrap();
        let fine = minimize_in_sector(-1, &g, &SectorOptions { n: 1024, starts: 1, ..opts() }).unwrap();
        let sample = |n: usize| {
            let step = 1024 / n;
            let vals: Vec<f64> = (0..n).map(|j| fine.profile.psi(j * step)).collect();
            el_residual(&PsiProfile::from_values(-1, &vals).unwrap(), &g)
        };
        let (a, b) = (sample(64), sample(128));
        let ratio = a / b;
        assert!(ratio > 3.0 && ratio < 5.0, "{ratio}");
    }

    #[test]
    fn s_independence() {
        let o = opts();
        let a = minimize_in_sector(-1, &FrustumGeometry::new(0.8, 1.0, 1.0).unwrap(), &o).unwrap();
        let b = minimize_in_sector(-1, &FrustumGeometry::new(0.8, 5.0, 0.2).unwrap(), &o).unwrap();
        assert_eq!(a.energy, b.energy);
    }

    #[test]
    fn dichotomy_and_critical_angle() {
        let o = opts();
        assert!(sector_gap(0.3, &o).unwrap() < 0.0);
        assert!(sector_gap(1.0, &o).unwrap() < 0.0);
        assert!(sector_gap(PI / 2.0, &o).unwrap() > 0.0);
        let c = critical_angle(0.3, 1.5, 1e-3, &o).unwrap();
        assert!((1.105..=std::f64::consts::FRAC_PI_2).contains(&c), "{c}");
        assert!(matches!(
            critical_angle(0.3, 0.6, 1e-3, &o),
            Err(Error::Bracketing { .. })
        ));
    }

    #[test]
    fn input_validation() {
        assert!(FrustumGeometry::new(0.0, 1.0, 1.0).is_err());
        assert!(FrustumGeometry::new(0.5, 0.0, 1.0).is_err());
        let g = FrustumGeometry::unit(0.5).unwrap();
        assert!(minimize_in_sector(0, &g, &SectorOptions { n: 32, ..opts() }).is_err());
        assert!(sector_compare(&g, &[], &opts()).is_err());
    }

    #[test]
    fn sweep_csv() {
        let rows = sweep(&[0.5, 1.2], &[0, -1], &SectorOptions { starts: 1, ..opts() }).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!((rows[1].phi0, rows[1].k), (0.5, -1));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        write_sweep_csv(&rows, Some(1.12), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("phi0,k,energy,el_residual,n_iters,converged\n"));
        assert_eq!(text.lines().count(), 6);
        assert!(text.lines().last().unwrap().starts_with("critical_angle"));
    }
}
