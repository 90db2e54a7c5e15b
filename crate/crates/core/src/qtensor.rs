//! Symmetric traceless order tensors and their decompositions.
//!
//! A [`QTensor`] is stored as a full 3×3 matrix. Every constructor either
//! validates or projects onto the symmetric traceless subspace, so the
//! symmetry and trace residuals stay below [`SYM_TOL`].

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Absolute tolerance for symmetry/trace residuals of stored tensors.
pub const SYM_TOL: f64 = 1e-12;
/// Tolerance for unit vectors and orthonormal frames.
pub const UNIT_TOL: f64 = 1e-12;
/// Tolerance used by [`extract_p`] for the eigenvector condition `Q nu = beta nu`.
pub const REPRESENTABLE_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QTensor(Mat3);

impl QTensor {
    pub fn zero() -> Self {
        QTensor(Mat3::zeros())
    }

    /// Accepts `m` if it is symmetric and traceless within [`SYM_TOL`]
    /// (relative to its magnitude), then removes the residual exactly.
    pub fn from_matrix(m: Mat3) -> Result<Self> {
        let scale = m.norm().max(1.0);
        let asym = (m - m.transpose()).amax();
        let trace = m.trace().abs();
        if asym > SYM_TOL * scale || trace > SYM_TOL * scale {
            return Err(Error::InvalidInput(format!(
                "matrix is not symmetric traceless (asymmetry {asym:.3e}, trace {trace:.3e})"
            )));
        }
        Ok(Self::project(m))
    }

    /// Orthogonal projection onto symmetric traceless matrices.
    pub fn project(m: Mat3) -> Self {
        let sym = 0.5 * (m + m.transpose());
        QTensor(sym - Mat3::identity() * (sym.trace() / 3.0))
    }

    /// `S (n ⊗ n - I/3)`.
    pub fn from_uniaxial(s: f64, n: &Vec3) -> Result<Self> {
        check_unit(n, "director")?;
        Ok(QTensor(s * (n * n.transpose() - Mat3::identity() / 3.0)))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn into_matrix(self) -> Mat3 {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// `tr(Q²)`, which equals the squared Frobenius norm.
    pub fn tr2(&self) -> f64 {
        self.0.norm_squared()
    }

    pub fn tr3(&self) -> f64 {
        (self.0 * self.0 * self.0).trace()
    }

    /// Frobenius inner product `A·B = tr(BᵀA)`.
    pub fn dot(&self, other: &QTensor) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// `R Q Rᵀ`.
    pub fn rotate(&self, r: &Mat3) -> Self {
        Self::project(r * self.0 * r.transpose())
    }

    /// Eigen-decomposition with ascending eigenvalues.
    ///
    /// Repeated eigenvalues (generic for uniaxial states) come back with an
    /// arbitrary orthonormal basis of the eigenspace.
    pub fn spectral(&self) -> Spectrum {
        let eig = SymmetricEigen::new(self.0);
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let eigenvalues = order.map(|i| eig.eigenvalues[i]);
        let mut frame = order.map(|i| eig.eigenvectors.column(i).into_owned());
        // right-handed
        if frame[0].cross(&frame[1]).dot(&frame[2]) < 0.0 {
            frame[2] = -frame[2];
        }
        Spectrum { eigenvalues, frame }
    }
}

impl Add for QTensor {
    type Output = QTensor;
    fn add(self, rhs: QTensor) -> QTensor {
        QTensor(self.0 + rhs.0)
    }
}

impl Sub for QTensor {
    type Output = QTensor;
    fn sub(self, rhs: QTensor) -> QTensor {
        QTensor(self.0 - rhs.0)
    }
}

impl Neg for QTensor {
    type Output = QTensor;
    fn neg(self) -> QTensor {
        QTensor(-self.0)
    }
}

impl Mul<f64> for QTensor {
    type Output = QTensor;
    fn mul(self, rhs: f64) -> QTensor {
        QTensor(self.0 * rhs)
    }
}

impl Mul<QTensor> for f64 {
    type Output = QTensor;
    fn mul(self, rhs: QTensor) -> QTensor {
        QTensor(rhs.0 * self)
    }
}

/// Eigenvalues `λ₁ ≤ λ₂ ≤ λ₃` with eigenvectors `l, m, n` (in that order).
#[derive(Clone, Copy, Debug)]
pub struct Spectrum {
    pub eigenvalues: [f64; 3],
    pub frame: [Vec3; 3],
}

impl Spectrum {
    /// True iff every eigenvalue lies in `[-1/3, 2/3]` (up to [`SYM_TOL`]
    /// rounding from the eigen-solver).
    pub fn is_physical(&self) -> bool {
        self.eigenvalues
            .iter()
            .all(|&l| (-1.0 / 3.0 - SYM_TOL..=2.0 / 3.0 + SYM_TOL).contains(&l))
    }

    pub fn reconstruct(&self) -> Mat3 {
        self.eigenvalues
            .iter()
            .zip(self.frame.iter())
            .map(|(&l, v)| l * v * v.transpose())
            .sum()
    }

    /// Biaxial parameters `S₁ = 2λ₁+λ₃`, `S₂ = λ₁+2λ₃` with `l`, `n` the
    /// eigenvectors of `λ₁` and `λ₃`.
    pub fn biaxial(&self) -> BiaxialState {
        let [l1, _, l3] = self.eigenvalues;
        BiaxialState {
            s1: 2.0 * l1 + l3,
            s2: l1 + 2.0 * l3,
            l: self.frame[0],
            n: self.frame[2],
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct UniaxialState {
    pub s: f64,
    pub n: Vec3,
}

impl UniaxialState {
    pub fn new(s: f64, n: Vec3) -> Result<Self> {
        check_unit(&n, "director")?;
        Ok(UniaxialState { s, n })
    }

    pub fn tensor(&self) -> QTensor {
        QTensor(self.s * (self.n * self.n.transpose() - Mat3::identity() / 3.0))
    }
}

/// `S₁ (l⊗l - I/3) + S₂ (n⊗n - I/3)` with `l ⟂ n`.
#[derive(Clone, Copy, Debug)]
pub struct BiaxialState {
    pub s1: f64,
    pub s2: f64,
    pub l: Vec3,
    pub n: Vec3,
}

impl BiaxialState {
    pub fn tensor(&self) -> Result<QTensor> {
        check_unit(&self.l, "l")?;
        check_unit(&self.n, "n")?;
        if self.l.dot(&self.n).abs() > UNIT_TOL {
            return Err(Error::InvalidInput("biaxial axes are not orthogonal".into()));
        }
        let third = Mat3::identity() / 3.0;
        Ok(QTensor::project(
            self.s1 * (self.l * self.l.transpose() - third)
                + self.s2 * (self.n * self.n.transpose() - third),
        ))
    }
}

/// Orthonormal triple: two tangent directions and the normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub t: Vec3,
    pub n: Vec3,
    pub nu: Vec3,
}

impl Frame {
    pub fn new(t: Vec3, n: Vec3, nu: Vec3) -> Result<Self> {
        let f = Frame { t, n, nu };
        let dev = f.orthonormality_defect();
        if dev > UNIT_TOL {
            return Err(Error::InvalidInput(format!(
                "frame is not orthonormal (defect {dev:.3e})"
            )));
        }
        Ok(f)
    }

    pub fn standard() -> Self {
        Frame {
            t: Vec3::x(),
            n: Vec3::y(),
            nu: Vec3::z(),
        }
    }

    /// Frame whose vectors are the columns of `r`.
    pub fn from_rotation(r: &Mat3) -> Result<Self> {
        Frame::new(
            r.column(0).into_owned(),
            r.column(1).into_owned(),
            r.column(2).into_owned(),
        )
    }

    /// Largest entry of `FᵀF - I` where `F = [t n nu]`.
    pub fn orthonormality_defect(&self) -> f64 {
        let f = Mat3::from_columns(&[self.t, self.n, self.nu]);
        (f.transpose() * f - Mat3::identity()).amax()
    }
}

/// Anchoring-compatible tensor in a surface frame:
/// `p₁(T⊗T−N⊗N) + p₂(T⊗N+N⊗T) + (3β/2)(ν⊗ν−I/3)`.
#[derive(Clone, Copy, Debug)]
pub struct PRepresentation {
    pub p: [f64; 2],
    pub beta: f64,
    pub frame: Frame,
}

pub fn assemble_from_p(rep: &PRepresentation) -> Result<QTensor> {
    let f = &rep.frame;
    let dev = f.orthonormality_defect();
    if dev > UNIT_TOL {
        return Err(Error::InvalidInput(format!(
            "frame is not orthonormal (defect {dev:.3e})"
        )));
    }
    Ok(assemble_unchecked(rep.p, rep.beta, f))
}

pub(crate) fn assemble_unchecked(p: [f64; 2], beta: f64, f: &Frame) -> QTensor {
    let tt = f.t * f.t.transpose();
    let nn = f.n * f.n.transpose();
    let tn = f.t * f.n.transpose();
    let vv = f.nu * f.nu.transpose();
    QTensor::project(
        p[0] * (tt - nn)
            + p[1] * (tn + tn.transpose())
            + 1.5 * beta * (vv - Mat3::identity() / 3.0),
    )
}

pub fn extract_p(q: &QTensor, frame: &Frame) -> Result<PRepresentation> {
    let dev = frame.orthonormality_defect();
    if dev > UNIT_TOL {
        return Err(Error::InvalidInput(format!(
            "frame is not orthonormal (defect {dev:.3e})"
        )));
    }
    let m = q.matrix();
    let qnu = m * frame.nu;
    let beta = qnu.dot(&frame.nu);
    let residual = (qnu - beta * frame.nu).norm();
    if residual > REPRESENTABLE_TOL * m.norm().max(1.0) {
        return Err(Error::NotRepresentable { residual });
    }
    let qt = m * frame.t;
    let p1 = 0.5 * (qt.dot(&frame.t) - (m * frame.n).dot(&frame.n));
    let p2 = qt.dot(&frame.n);
    Ok(PRepresentation {
        p: [p1, p2],
        beta,
        frame: *frame,
    })
}

/// A Frobenius-orthonormal basis of symmetric traceless matrices.
///
/// Order: the three off-diagonal shears `(e_i⊗e_j + e_j⊗e_i)/√2` for
/// `(i,j) = (0,1), (0,2), (1,2)`, then `diag(1,-1,0)/√2` and
/// `diag(1,1,-2)/√6`.
pub fn traceless_basis() -> [Mat3; 5] {
    let r2 = std::f64::consts::FRAC_1_SQRT_2;
    let r6 = 1.0 / 6.0_f64.sqrt();
    let shear = |i: usize, j: usize| {
        let mut m = Mat3::zeros();
        m[(i, j)] = r2;
        m[(j, i)] = r2;
        m
    };
    [
        shear(0, 1),
        shear(0, 2),
        shear(1, 2),
        Mat3::from_diagonal(&Vec3::new(r2, -r2, 0.0)),
        Mat3::from_diagonal(&Vec3::new(r6, r6, -2.0 * r6)),
    ]
}

/// `p = ρ (cos 2ψ, sin 2ψ)` for the director `n = cos ψ T + sin ψ N`.
pub fn p_from_director(rho: f64, psi: f64) -> [f64; 2] {
    [rho * (2.0 * psi).cos(), rho * (2.0 * psi).sin()]
}

/// Director angle `ψ = ½ atan2(p₂, p₁)` relative to `T`, in `(-π/2, π/2]`.
pub fn director_angle(p: [f64; 2]) -> f64 {
    0.5 * p[1].atan2(p[0])
}

pub(crate) fn check_unit(v: &Vec3, what: &str) -> Result<()> {
    let dev = (v.norm() - 1.0).abs();
    if dev > UNIT_TOL {
        return Err(Error::InvalidInput(format!(
            "{what} is not a unit vector (|v| - 1 = {dev:.3e})"
        )));
    }
    Ok(())
}
