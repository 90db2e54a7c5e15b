//! The normal remnant: minimization of `f_e(G⊗ν + ∇_M Q)` over traceless
//! symmetric `G`, and the resulting reduced density `f_e⁰`.
//!
//! With `Uᵢ = M₂ (div_M Qᵢ) ν + M₃ (∇_M Qᵢ)ᵀ ν` and `ζ = M₂ + M₃`,
//!
//! ```text
//! f_e(G⊗ν + ∇_M Q) = f_e(∇_M Q) + U·G + ½|G|² + (ζ/2)|Gν|²,
//! ```
//!
//! so the minimizer is available in closed form. A brute-force route that
//! works only through [`f_e`] is kept as an oracle.

use nalgebra::{Matrix5, Vector5};

use crate::elastic::{f_e, ElasticConstants, GradQ};
use crate::error::{Error, Result};
use crate::qtensor::{traceless_basis, Mat3, Vec3};

const NORMAL_WARN_TOL: f64 = 1e-10;
const NORMAL_REJECT_TOL: f64 = 1e-6;
const TANGENTIAL_TOL: f64 = 1e-12;

/// Tangential gradient data `∇_M Q`, the unit normal `ν` and the elastic
/// constants.
#[derive(Clone, Copy, Debug)]
pub struct RemnantInput {
    grad: GradQ,
    nu: Vec3,
    constants: ElasticConstants,
}

impl RemnantInput {
    /// Validates symmetry/tracelessness of the gradient and that every
    /// `∇_M Qᵢ` annihilates `ν`. A slightly non-unit `ν` is renormalized.
    pub fn new(grad: GradQ, nu: Vec3, constants: ElasticConstants) -> Result<Self> {
        let len = nu.norm();
        let dev = (len - 1.0).abs();
        if !(dev <= NORMAL_REJECT_TOL) {
            return Err(Error::InvalidInput(format!(
                "normal has length {len}, expected 1"
            )));
        }
        if dev > NORMAL_WARN_TOL {
            log::warn!("renormalizing normal of length {len}");
        }
        let nu = nu / len;
        let scale = grad.norm2().sqrt().max(1.0);
        let defect = grad.admissibility_defect();
        if defect > TANGENTIAL_TOL * scale {
            return Err(Error::InvalidInput(format!(
                "gradient is not symmetric traceless (defect {defect:e})"
            )));
        }
        let normal_part = (0..3)
            .map(|i| (grad.column(i) * nu).amax())
            .fold(0.0, f64::max);
        if normal_part > TANGENTIAL_TOL * scale {
            return Err(Error::InvalidInput(format!(
                "gradient has a normal component of size {normal_part:e}"
            )));
        }
        Ok(RemnantInput {
            grad,
            nu,
            constants,
        })
    }

    pub fn grad(&self) -> &GradQ {
        &self.grad
    }

    pub fn nu(&self) -> &Vec3 {
        &self.nu
    }

    pub fn constants(&self) -> &ElasticConstants {
        &self.constants
    }

    /// `div_M Qᵢ` as a vector indexed by `i`.
    pub fn div(&self) -> Vec3 {
        self.grad.div()
    }
}

/// A traceless symmetric matrix playing the role of the normal derivative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GTensor(Mat3);

impl GTensor {
    pub fn zero() -> Self {
        GTensor(Mat3::zeros())
    }

    pub fn from_matrix(m: Mat3) -> Result<Self> {
        let scale = m.amax().max(1.0);
        let defect = (m - m.transpose()).amax().max(m.trace().abs());
        if defect > TANGENTIAL_TOL * scale {
            return Err(Error::InvalidInput(format!(
                "G is not symmetric traceless (defect {defect:e})"
            )));
        }
        Ok(GTensor(m))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn column(&self, i: usize) -> Vec3 {
        self.0.column(i).into()
    }

    /// The gradient `G ⊗ ν`, i.e. `∂ₖQᵢⱼ = Gᵢⱼ νₖ`.
    pub fn outer_normal(&self, nu: &Vec3) -> GradQ {
        let mut g = GradQ::zero();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    g.d[i][j][k] = self.0[(i, j)] * nu[k];
                }
            }
        }
        g
    }
}

/// Auxiliary data `U`, `ζ` and `D(U) = ½(U + Uᵀ)`.
#[derive(Clone, Copy, Debug)]
pub struct AuxU {
    pub u: Mat3,
    pub zeta: f64,
    pub du: Mat3,
}

impl AuxU {
    pub fn new(input: &RemnantInput) -> Self {
        let c = input.constants;
        let nu = input.nu;
        let div = input.div();
        let mut u = Mat3::zeros();
        for i in 0..3 {
            let col = c.m2 * div[i] * nu + c.m3 * input.grad.column(i).transpose() * nu;
            u.set_column(i, &col);
        }
        AuxU {
            u,
            zeta: c.m2 + c.m3,
            du: 0.5 * (u + u.transpose()),
        }
    }

    /// `φ[G] = U·G + ½|G|² + (ζ/2)|Gν|²`.
    pub fn phi(&self, g: &Mat3, nu: &Vec3) -> f64 {
        self.u.dot(g) + 0.5 * g.norm_squared() + 0.5 * self.zeta * (g * nu).norm_squared()
    }
}

/// Coordinates of a traceless symmetric matrix in the orthonormal basis of
/// [`traceless_basis`].
pub fn to_coords(m: &Mat3) -> [f64; 5] {
    traceless_basis().map(|e| e.dot(m))
}

pub fn from_coords(c: &[f64; 5]) -> Mat3 {
    traceless_basis()
        .iter()
        .zip(c)
        .fold(Mat3::zeros(), |acc, (e, x)| acc + e * *x)
}

fn require_coercive(c: &ElasticConstants) -> Result<()> {
    if c.is_coercive() {
        Ok(())
    } else {
        Err(Error::IllPosed(format!(
            "elastic constants (M2={}, M3={}) are outside the coercive region",
            c.m2, c.m3
        )))
    }
}

/// Minimizes `G ↦ f_e(G⊗ν + ∇_M Q)` over the five coordinates of the
/// traceless symmetric matrices. The quadratic and linear parts are read off
/// `f_e` by polarization and the normal equations are solved exactly.
/// Returns the minimizer and the minimum of `φ`.
pub fn brute_force_g(input: &RemnantInput) -> Result<(GTensor, f64)> {
    let c = &input.constants;
    require_coercive(c)?;
    let basis = traceless_basis();
    let nu = &input.nu;
    let g0 = &input.grad;
    let f = |m: &Mat3| f_e(&GTensor(*m).outer_normal(nu).add(g0), c);
    let f0 = f_e(g0, c);
    let mut lin = Vector5::zeros();
    let mut hess = Matrix5::zeros();
    for a in 0..5 {
        lin[a] = 0.5 * (f(&basis[a]) - f(&(-basis[a])));
        for b in 0..5 {
            hess[(a, b)] = f(&(basis[a] + basis[b])) - f(&basis[a]) - f(&basis[b]) + f0;
        }
    }
    let chol = hess
        .cholesky()
        .ok_or_else(|| Error::IllPosed("remnant quadratic is not positive definite".into()))?;
    let x = chol.solve(&(-lin));
    let g = from_coords(&[x[0], x[1], x[2], x[3], x[4]]);
    let g = 0.5 * (g + g.transpose());
    let value = f(&g) - f0;
    Ok((GTensor(g), value))
}

fn check_denominators(zeta: f64) -> Result<()> {
    if !(zeta > -1.5) {
        return Err(Error::IllPosed(format!(
            "zeta = M2 + M3 = {zeta} makes the remnant problem degenerate"
        )));
    }
    Ok(())
}

/// The minimizer
///
/// ```text
/// Ḡ = −D + ζ/(ζ+2)(ν⊗Dν + Dν⊗ν)
///     − ζ(ζu + (ζ+2)T)/((ζ+2)(2ζ+3)) ν⊗ν − (ζu − (ζ+1)T)/(2ζ+3) I
/// ```
///
/// with `D = D(U)`, `u = Uν·ν` and `T = tr U`.
pub fn closed_form_g(input: &RemnantInput) -> Result<GTensor> {
    let aux = AuxU::new(input);
    Ok(GTensor(closed_form_from_aux(&aux, &input.nu)?))
}

fn closed_form_from_aux(aux: &AuxU, nu: &Vec3) -> Result<Mat3> {
    let z = aux.zeta;
    check_denominators(z)?;
    let d = aux.du;
    let dnu = d * nu;
    let u = nu.dot(&(aux.u * nu));
    let t = aux.u.trace();
    let nn = nu * nu.transpose();
    let g = -d + z / (z + 2.0) * (nu * dnu.transpose() + dnu * nu.transpose())
        - z * (z * u + (z + 2.0) * t) / ((z + 2.0) * (2.0 * z + 3.0)) * nn
        - (z * u - (z + 1.0) * t) / (2.0 * z + 3.0) * Mat3::identity();
    Ok(0.5 * (g + g.transpose()))
}

/// Minimum value of `φ`:
///
/// ```text
/// −½|D|² + ζ/(ζ+2)|Dν|² − ζ²/(2(ζ+2)(2ζ+3)) u² − ζ/(2ζ+3) uT + (ζ+1)/(2(2ζ+3)) T².
/// ```
pub fn phi_min(input: &RemnantInput) -> Result<f64> {
    let aux = AuxU::new(input);
    let z = aux.zeta;
    check_denominators(z)?;
    let nu = &input.nu;
    let d = aux.du;
    let u = nu.dot(&(aux.u * nu));
    let t = aux.u.trace();
    let q = 2.0 * z + 3.0;
    Ok(-0.5 * d.norm_squared() + z / (z + 2.0) * (d * nu).norm_squared()
        - z * z / (2.0 * (z + 2.0) * q) * u * u
        - z / q * u * t
        + (z + 1.0) / (2.0 * q) * t * t)
}

/// Norm of the projection onto traceless symmetric matrices of the gradient
/// of `φ` at `g`, i.e. of `D(U) + G + (ζ/2)(Gν⊗ν + ν⊗Gν)`.
pub fn stationarity_residual(input: &RemnantInput, g: &GTensor) -> f64 {
    let aux = AuxU::new(input);
    let nu = &input.nu;
    let gnu = g.0 * nu;
    let grad = aux.du + g.0 + 0.5 * aux.zeta * (gnu * nu.transpose() + nu * gnu.transpose());
    let grad = grad - grad.trace() / 3.0 * Mat3::identity();
    grad.norm()
}

/// How [`f_e0_via`] evaluates the reduced density.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum F0Route {
    /// `f_e(∇_M Q)` plus the brute-force minimum.
    BruteForce,
    /// `f_e(∇_M Q)` plus the closed-form minimum of `φ`.
    ClosedForm,
    /// The expanded formula in terms of `∇_M Q`, `div_M Q` and `ν`.
    Expanded,
    /// The expanded formula valid for `M₃ = 0`.
    SplayOnly,
}

/// `f_e⁰(∇_M Q, ν) = min_G f_e(G⊗ν + ∇_M Q)`.
pub fn f_e0(input: &RemnantInput) -> Result<f64> {
    f_e0_via(input, F0Route::ClosedForm)
}

pub fn f_e0_via(input: &RemnantInput, route: F0Route) -> Result<f64> {
    let c = &input.constants;
    require_coercive(c)?;
    match route {
        F0Route::BruteForce => Ok(f_e(&input.grad, c) + brute_force_g(input)?.1),
        F0Route::ClosedForm => Ok(f_e(&input.grad, c) + phi_min(input)?),
        F0Route::Expanded => Ok(expanded(input)),
        F0Route::SplayOnly => {
            if c.m3 != 0.0 {
                return Err(Error::InvalidInput(
                    "the splay-only formula needs M3 = 0".into(),
                ));
            }
            Ok(splay_only(input))
        }
    }
}

fn splay_only(input: &RemnantInput) -> f64 {
    let m2 = input.constants.m2;
    let div = input.div();
    let nd = input.nu.dot(&div);
    0.5 * (input.grad.norm2() + 2.0 * m2 / (m2 + 2.0) * div.norm_squared()
        - m2 * m2 / ((m2 + 2.0) * (2.0 * m2 + 3.0)) * nd * nd)
}

fn expanded(input: &RemnantInput) -> f64 {
    let ElasticConstants { m2, m3 } = input.constants;
    let nu = &input.nu;
    let div = input.div();
    let nd = nu.dot(&div);
    let s = m2 + m3 + 2.0;
    let cols: [Mat3; 3] = [0, 1, 2].map(|i| input.grad.column(i));

    let mut total = 0.5 * input.grad.norm2() + m2 * (m3 + 2.0) / (2.0 * s) * div.norm_squared();
    let num = (m3 * m3 + 2.0 * m3 - 1.0) * m2 * m2
        + (2.0 * m3 * m3 + 5.0 * m3 + 4.0) * m2 * m3
        + (m3 * m3 + 3.0 * m3 + 2.0) * m3 * m3;
    total += num / (2.0 * s * (2.0 * m2 + 2.0 * m3 + 3.0)) * nd * nd;

    let mut sum = 0.0;
    for (i, m) in cols.iter().enumerate() {
        sum += m3 * m.dot(&m.transpose()) - 2.0 * m2 * m3 / s * nu.dot(&(nu[i] * m * div));
    }
    total += 0.5 * sum;

    let sym = cols
        .iter()
        .enumerate()
        .fold(Mat3::zeros(), |acc, (i, m)| acc + nu[i] * (m + m.transpose()));
    total -= m3 * m3 / 8.0 * sym.norm_squared();

    let v = cols
        .iter()
        .enumerate()
        .fold(Vec3::zeros(), |acc, (i, m)| acc + nu[i] * (m.transpose() * nu));
    total += m3 * m3 / 4.0 * (m2 + m3) / s * v.norm_squared();
    total
}

/// Random inputs for oracle comparisons.
pub mod sample {
    use super::*;
    use crate::elastic::coercivity_margin;
    use crate::qtensor::QTensor;
    use rand::Rng;

    pub fn random_unit(rng: &mut impl Rng) -> Vec3 {
        loop {
            let v = Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            if v.norm() > 0.1 {
                return v.normalize();
            }
        }
    }

    /// Random admissible gradient whose directions are tangent to `nu`.
    pub fn random_tangential(rng: &mut impl Rng, nu: &Vec3) -> GradQ {
        let p = Mat3::identity() - nu * nu.transpose();
        let slices = [0, 1, 2].map(|_| {
            QTensor::project(Mat3::from_fn(|_, _| rng.gen_range(-1.0..1.0))).into_matrix()
        });
        GradQ::from_directional(&slices).right_mul(&p)
    }

    /// `M₂ ∈ (−0.6, 3)`, `M₃ ∈ (−1, 2)`, coercivity margin above `0.01`.
    pub fn random_coercive(rng: &mut impl Rng) -> ElasticConstants {
        loop {
            let c = ElasticConstants::new(rng.gen_range(-0.6..3.0), rng.gen_range(-1.0..2.0));
            if c.is_coercive() && coercivity_margin(&c) > 1e-2 {
                return c;
            }
        }
    }

    pub fn random_input(rng: &mut impl Rng) -> RemnantInput {
        let c = random_coercive(rng);
        random_input_with(rng, c).expect("tangential by construction")
    }

    /// Random unit normal and tangential gradient with given constants.
    pub fn random_input_with(rng: &mut impl Rng, constants: ElasticConstants) -> Result<RemnantInput> {
        let nu = random_unit(rng);
        let g = random_tangential(rng, &nu);
        RemnantInput::new(g, nu, constants)
    }
}

/// `(‖Ḡ_closed − Ḡ_brute‖_F, |f_e⁰ expanded − f_e⁰ brute|)`.
pub fn oracle_gap(input: &RemnantInput) -> Result<(f64, f64)> {
    let (gb, _) = brute_force_g(input)?;
    let gc = closed_form_g(input)?;
    let fe = f_e0_via(input, F0Route::Expanded)?;
    let fb = f_e0_via(input, F0Route::BruteForce)?;
    Ok(((gc.matrix() - gb.matrix()).norm(), (fe - fb).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qtensor::QTensor;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use super::sample::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// `∂₁Q₁₁ = 1`, `∂₁Q₂₂ = -1`: tangential for `ν = e₃`, `div = (1,0,0)`.
    fn splay_x() -> GradQ {
        let mut g = GradQ::zero();
        g.d[0][0][0] = 1.0;
        g.d[1][1][0] = -1.0;
        g
    }

    /// `∂₁Q₁₃ = ∂₁Q₃₁ = 1`: `div = (0,0,1)`.
    fn splay_z() -> GradQ {
        let mut g = GradQ::zero();
        g.d[0][2][0] = 1.0;
        g.d[2][0][0] = 1.0;
        g
    }

    #[test]
    fn closed_form_examples() {
        let c = ElasticConstants::new(1.0, 0.0);
        let inp = RemnantInput::new(splay_x(), Vec3::z(), c).unwrap();
        assert_eq!(inp.div(), Vec3::new(1.0, 0.0, 0.0));
        let g = closed_form_g(&inp).unwrap();
        let mut expect = Mat3::zeros();
        expect[(0, 2)] = -1.0 / 3.0;
        expect[(2, 0)] = -1.0 / 3.0;
        assert!((g.matrix() - expect).amax() < 1e-14);

        let inp = RemnantInput::new(splay_z(), Vec3::z(), c).unwrap();
        assert_eq!(inp.div(), Vec3::new(0.0, 0.0, 1.0));
        let g = closed_form_g(&inp).unwrap();
        let expect = Mat3::from_diagonal(&Vec3::new(0.2, 0.2, -0.4));
        assert!((g.matrix() - expect).amax() < 1e-14);
        let (gb, _) = brute_force_g(&inp).unwrap();
        assert!((gb.matrix() - expect).amax() < 1e-12);

        let inp =
            RemnantInput::new(splay_z(), Vec3::z(), ElasticConstants::one_constant()).unwrap();
        assert_eq!(*closed_form_g(&inp).unwrap().matrix(), Mat3::zeros());
    }

    #[test]
    fn brute_force_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let nu = random_unit(&mut rng);
        let g = random_tangential(&mut rng, &nu);
        let inp = RemnantInput::new(g, nu, ElasticConstants::one_constant()).unwrap();
        let (gb, v) = brute_force_g(&inp).unwrap();
        assert!(gb.matrix().amax() < 1e-12);
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);

        let inp = RemnantInput::new(GradQ::zero(), nu, ElasticConstants::new(0.7, 0.5)).unwrap();
        let (gb, v) = brute_force_g(&inp).unwrap();
        assert!(gb.matrix().amax() < 1e-14);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn brute_force_and_closed_form_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let inp = random_input(&mut rng);
            let gc = closed_form_g(&inp).unwrap();
            let (gb, vb) = brute_force_g(&inp).unwrap();
            assert!((gc.matrix() - gb.matrix()).amax() < 1e-8);
            assert_abs_diff_eq!(vb, phi_min(&inp).unwrap(), epsilon = 1e-8);
        }
    }

    #[test]
    fn phi_identity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let inp = random_input(&mut rng);
            let aux = AuxU::new(&inp);
            let g = from_coords(&[0; 5].map(|_| rng.gen_range(-1.0..1.0)));
            let lhs = f_e(&GTensor(g).outer_normal(inp.nu()).add(inp.grad()), inp.constants());
            let rhs = f_e(inp.grad(), inp.constants()) + aux.phi(&g, inp.nu());
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10);
        }
    }

    #[test]
    fn f_e0_examples() {
        let inp = RemnantInput::new(GradQ::zero(), Vec3::z(), ElasticConstants::new(1.0, 0.5))
            .unwrap();
        assert_eq!(f_e0(&inp).unwrap(), 0.0);

        let c = ElasticConstants::new(1.0, 0.0);
        let inp = RemnantInput::new(splay_x(), Vec3::z(), c).unwrap();
        assert_abs_diff_eq!(inp.grad().norm2(), 2.0);
        for route in [
            F0Route::BruteForce,
            F0Route::ClosedForm,
            F0Route::Expanded,
            F0Route::SplayOnly,
        ] {
            assert_abs_diff_eq!(f_e0_via(&inp, route).unwrap(), 4.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn all_routes_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for i in 0..500 {
            let mut inp = random_input(&mut rng);
            if i % 5 == 0 {
                inp.constants = ElasticConstants::new(0.7, 0.5);
            }
            let a = f_e0_via(&inp, F0Route::BruteForce).unwrap();
            let b = f_e0_via(&inp, F0Route::ClosedForm).unwrap();
            let c = f_e0_via(&inp, F0Route::Expanded).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
            assert_abs_diff_eq!(a, c, epsilon = 1e-8);
        }
    }

    #[test]
    fn expanded_reduces_to_splay_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..300 {
            let mut inp = random_input(&mut rng);
            inp.constants.m3 = 0.0;
            inp.constants.m2 = rng.gen_range(-0.59..3.0);
            let a = f_e0_via(&inp, F0Route::Expanded).unwrap();
            let b = f_e0_via(&inp, F0Route::SplayOnly).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn one_constant_reduces_to_dirichlet() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let mut inp = random_input(&mut rng);
            inp.constants = ElasticConstants::one_constant();
            assert_abs_diff_eq!(
                f_e0(&inp).unwrap(),
                0.5 * inp.grad().norm2(),
                epsilon = 1e-13
            );
        }
    }

    #[test]
    fn stationarity_and_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..1000 {
            let inp = random_input(&mut rng);
            let g = closed_form_g(&inp).unwrap();
            let m = g.matrix();
            assert!(m.trace().abs() < 1e-12);
            assert!((m - m.transpose()).amax() < 1e-12);
            assert!(stationarity_residual(&inp, &g) < 1e-10);
        }
    }

    #[test]
    fn splay_only_lagrange_system() {
        // 2Ḡ + M₂(ν⊗div + div⊗ν) + M₂(Ḡν⊗ν + ν⊗Ḡν) + λI = 0
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let mut inp = random_input(&mut rng);
            inp.constants.m3 = 0.0;
            inp.constants.m2 = rng.gen_range(-0.5..3.0);
            let m2 = inp.constants.m2;
            let nu = *inp.nu();
            let div = inp.div();
            let g = *closed_form_g(&inp).unwrap().matrix();
            let gnu = g * nu;
            let r = 2.0 * g
                + m2 * (nu * div.transpose() + div * nu.transpose())
                + m2 * (gnu * nu.transpose() + nu * gnu.transpose());
            let lambda = -r.trace() / 3.0;
            assert!((r + lambda * Mat3::identity()).amax() < 1e-10);
        }
    }

    #[test]
    fn minimality_against_competitors() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let inp = random_input(&mut rng);
            let best = f_e0(&inp).unwrap();
            for _ in 0..100 {
                let g = from_coords(&[0; 5].map(|_| rng.gen_range(-2.0..2.0)));
                let val = f_e(&GTensor(g).outer_normal(inp.nu()).add(inp.grad()), inp.constants());
                assert!(best <= val + 1e-12);
            }
        }
    }

    #[test]
    fn u_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let inp = random_input(&mut rng);
            let aux = AuxU::new(&inp);
            let nd = inp.nu().dot(&inp.div());
            let c = inp.constants();
            assert_abs_diff_eq!(
                inp.nu().dot(&(aux.u * inp.nu())),
                c.m2 * nd,
                epsilon = 1e-12
            );
            assert_abs_diff_eq!(aux.u.trace(), (c.m2 + c.m3) * nd, epsilon = 1e-12);
            assert_eq!(aux.du, aux.du.transpose());
        }
    }

    #[test]
    fn isotropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..100 {
            let c = random_coercive(&mut rng);
            let nu = Vec3::z();
            let g = random_tangential(&mut rng, &nu);
            let r = *nalgebra::Rotation3::from_euler_angles(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-3.0..3.0),
            )
            .matrix();
            let mut gr = GradQ::zero();
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        let mut acc = 0.0;
                        for a in 0..3 {
                            for b in 0..3 {
                                for e in 0..3 {
                                    acc += r[(i, a)] * r[(j, b)] * r[(k, e)] * g.d[a][b][e];
                                }
                            }
                        }
                        gr.d[i][j][k] = acc;
                    }
                }
            }
            let base = f_e0(&RemnantInput::new(g, nu, c).unwrap()).unwrap();
            let rot = f_e0(&RemnantInput::new(gr, r * nu, c).unwrap()).unwrap();
            assert_abs_diff_eq!(base, rot, epsilon = 1e-10);
        }
    }

    #[test]
    fn input_validation() {
        let c = ElasticConstants::new(1.0, 0.0);
        assert!(RemnantInput::new(splay_x(), Vec3::new(0.0, 0.0, 1.1), c).is_err());
        let inp = RemnantInput::new(splay_x(), Vec3::new(0.0, 0.0, 1.0 + 1e-8), c).unwrap();
        assert_eq!(inp.nu().norm(), 1.0);
        // a gradient along ν is rejected
        let mut g = GradQ::zero();
        g.d[0][1][2] = 1.0;
        g.d[1][0][2] = 1.0;
        assert!(RemnantInput::new(g, Vec3::z(), c).is_err());
        let mut g = GradQ::zero();
        g.d[0][1][0] = 1.0;
        assert!(RemnantInput::new(g, Vec3::z(), c).is_err());
        let bad = RemnantInput::new(splay_x(), Vec3::z(), ElasticConstants::new(0.0, 2.5)).unwrap();
        assert!(matches!(brute_force_g(&bad), Err(Error::IllPosed(_))));
        assert!(matches!(f_e0(&bad), Err(Error::IllPosed(_))));
        let degenerate =
            RemnantInput::new(splay_x(), Vec3::z(), ElasticConstants::new(-1.0, -0.9)).unwrap();
        assert!(matches!(closed_form_g(&degenerate), Err(Error::IllPosed(_))));
    }

    #[test]
    fn coordinates_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..100 {
            let m = QTensor::project(Mat3::from_fn(|_, _| rng.gen_range(-1.0..1.0))).into_matrix();
            assert!((from_coords(&to_coords(&m)) - m).amax() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn f_e0_never_exceeds_f_e(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inp = random_input(&mut rng);
            let v = f_e0(&inp).unwrap();
            prop_assert!(v <= f_e(inp.grad(), inp.constants()) + 1e-12);
            prop_assert!(v >= -1e-12);
        }
    }
}
