//! Non-dimensional energy densities: elastic, bulk Landau-de Gennes and
//! weak anchoring, plus the coercivity test for the elastic constants.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qtensor::{check_unit, traceless_basis, Mat3, QTensor, Vec3};

/// Ratios `M₂ = L₂/L₁`, `M₃ = L₃/L₁`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElasticConstants {
    pub m2: f64,
    pub m3: f64,
}

impl ElasticConstants {
    pub fn new(m2: f64, m3: f64) -> Self {
        ElasticConstants { m2, m3 }
    }

    pub fn one_constant() -> Self {
        ElasticConstants { m2: 0.0, m3: 0.0 }
    }

    /// `-1 < M₃ < 2` and `M₂ > -3/5 - M₃/10`.
    pub fn is_coercive(&self) -> bool {
        self.m3 > -1.0 && self.m3 < 2.0 && self.m2 > -0.6 - self.m3 / 10.0
    }
}

/// Coefficients of `2A tr Q² + (4/3) B tr Q³ + (tr Q²)²`, the coherence
/// parameter `δ`, and the constant added to make the potential nonnegative.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LdGParams {
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    pub offset: f64,
}

impl LdGParams {
    /// Computes the offset as minus the minimum of the potential over
    /// uniaxial states (the global minimizers are uniaxial).
    pub fn new(a: f64, b: f64, delta: f64) -> Result<Self> {
        if !(delta > 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidInput(format!(
                "LdG parameters need finite A, B and delta > 0 (got A={a}, B={b}, delta={delta})"
            )));
        }
        let mut p = LdGParams {
            a,
            b,
            delta,
            offset: 0.0,
        };
        let min = p.uniaxial_roots().map_or(0.0, |roots| {
            roots
                .iter()
                .map(|&s| p.uniaxial_potential(s))
                .fold(0.0_f64, f64::min)
        });
        p.offset = -min;
        Ok(p)
    }

    /// Raw potential (without offset) from the invariants `tr Q²`, `tr Q³`.
    pub fn potential_raw(&self, tr2: f64, tr3: f64) -> f64 {
        2.0 * self.a * tr2 + 4.0 / 3.0 * self.b * tr3 + tr2 * tr2
    }

    /// `f(S) = 4AS²/3 + 8BS³/27 + 4S⁴/9`, the raw potential restricted to
    /// `S(n⊗n - I/3)`.
    pub fn uniaxial_potential(&self, s: f64) -> f64 {
        4.0 * self.a * s * s / 3.0 + 8.0 * self.b * s.powi(3) / 27.0 + 4.0 * s.powi(4) / 9.0
    }

    /// Nontrivial roots of `2S² + BS + 3A = 0`, `+` root first.
    fn uniaxial_roots(&self) -> Option<[f64; 2]> {
        let disc = self.b * self.b - 24.0 * self.a;
        (disc >= 0.0).then(|| {
            let r = disc.sqrt();
            [(-self.b + r) / 4.0, (-self.b - r) / 4.0]
        })
    }

    pub fn inv_delta2(&self) -> f64 {
        1.0 / (self.delta * self.delta)
    }
}

/// Weak anchoring split `f_s = f_s⁽⁰⁾ + ε f_s⁽¹⁾`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchoringParams {
    pub alpha0: f64,
    pub alpha1: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub beta: f64,
}

impl AnchoringParams {
    pub fn new(alpha0: f64, alpha1: f64, gamma0: f64, gamma1: f64, beta: f64) -> Result<Self> {
        let a = AnchoringParams {
            alpha0,
            alpha1,
            gamma0,
            gamma1,
            beta,
        };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        let w = [self.alpha0, self.alpha1, self.gamma0, self.gamma1];
        if w.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::InvalidInput("anchoring weights must be nonnegative".into()));
        }
        if self.alpha0 * self.alpha1 != 0.0 || self.gamma0 * self.gamma1 != 0.0 {
            return Err(Error::InvalidInput(
                "anchoring split needs alpha0*alpha1 = 0 and gamma0*gamma1 = 0".into(),
            ));
        }
        if !(-1.0 / 3.0..=2.0 / 3.0).contains(&self.beta) {
            return Err(Error::InvalidInput(format!(
                "beta = {} outside [-1/3, 2/3]",
                self.beta
            )));
        }
        Ok(())
    }

    /// True when the leading-order term forces `ν` to be an eigenvector.
    pub fn has_leading_order(&self) -> bool {
        self.alpha0 > 0.0 || self.gamma0 > 0.0
    }
}

/// `∂ₖQᵢⱼ` stored as `d[i][j][k]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradQ {
    pub d: [[[f64; 3]; 3]; 3],
}

impl GradQ {
    pub fn zero() -> Self {
        GradQ {
            d: [[[0.0; 3]; 3]; 3],
        }
    }

    /// Builds the gradient from the three directional derivatives `∂ₖQ`.
    pub fn from_directional(slices: &[Mat3; 3]) -> Self {
        let mut g = GradQ::zero();
        for (k, m) in slices.iter().enumerate() {
            for i in 0..3 {
                for j in 0..3 {
                    g.d[i][j][k] = m[(i, j)];
                }
            }
        }
        g
    }

    /// Builds the gradient from the column gradients `∇Qⱼ` with entries
    /// `(∇Qⱼ)ᵢₖ = ∂ₖQᵢⱼ`.
    pub fn from_columns(cols: &[Mat3; 3]) -> Self {
        let mut g = GradQ::zero();
        for (j, m) in cols.iter().enumerate() {
            for i in 0..3 {
                for k in 0..3 {
                    g.d[i][j][k] = m[(i, k)];
                }
            }
        }
        g
    }

    /// `∂ₖQ` as a matrix.
    pub fn directional(&self, k: usize) -> Mat3 {
        Mat3::from_fn(|i, j| self.d[i][j][k])
    }

    /// `∇Qⱼ` with rows indexed by the component and columns by direction.
    pub fn column(&self, j: usize) -> Mat3 {
        Mat3::from_fn(|i, k| self.d[i][j][k])
    }

    /// `div Qⱼ = ∂ᵢQᵢⱼ` for each column.
    pub fn div(&self) -> Vec3 {
        Vec3::from_fn(|j, _| (0..3).map(|i| self.d[i][j][i]).sum())
    }

    pub fn norm2(&self) -> f64 {
        self.d.iter().flatten().flatten().map(|x| x * x).sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut g = *self;
        g.d.iter_mut().flatten().flatten().for_each(|x| *x *= s);
        g
    }

    pub fn add(&self, other: &GradQ) -> Self {
        let mut g = *self;
        for (a, b) in g
            .d
            .iter_mut()
            .flatten()
            .flatten()
            .zip(other.d.iter().flatten().flatten())
        {
            *a += b;
        }
        g
    }

    /// Post-multiplies every column gradient by `m`, i.e. `∇Qⱼ ↦ ∇Qⱼ m`.
    pub fn right_mul(&self, m: &Mat3) -> Self {
        let cols = [0, 1, 2].map(|j| self.column(j) * m);
        GradQ::from_columns(&cols)
    }

    /// Largest violation of symmetry/tracelessness in `(i, j)`.
    pub fn admissibility_defect(&self) -> f64 {
        (0..3)
            .map(|k| {
                let m = self.directional(k);
                (m - m.transpose()).amax().max(m.trace().abs())
            })
            .fold(0.0, f64::max)
    }
}

/// `½ Σⱼ { |∇Qⱼ|² + M₂ (div Qⱼ)² + M₃ ∇Qⱼ·∇Qⱼᵀ }`.
pub fn f_e(g: &GradQ, c: &ElasticConstants) -> f64 {
    let mut total = 0.0;
    for j in 0..3 {
        let col = g.column(j);
        let div = col.trace();
        total += col.norm_squared() + c.m2 * div * div + c.m3 * col.dot(&col.transpose());
    }
    0.5 * total
}

/// `2A tr Q² + (4/3) B tr Q³ + (tr Q²)²` plus the nonnegativity offset.
pub fn f_ldg(q: &QTensor, p: &LdGParams) -> f64 {
    p.potential_raw(q.tr2(), q.tr3()) + p.offset
}

/// Order parameter of the ordered uniaxial minimum: the nontrivial root of
/// `2S² + BS + 3A = 0` with the lower restricted potential. For `B ≤ 0` this
/// is `(-B + √(B² - 24A))/4`.
pub fn uniaxial_stationary_s(p: &LdGParams) -> Result<f64> {
    let discriminant = p.b * p.b - 24.0 * p.a;
    let roots = p
        .uniaxial_roots()
        .ok_or(Error::NoNematicMinimum { discriminant })?;
    let [plus, minus] = roots;
    Ok(if p.uniaxial_potential(minus) < p.uniaxial_potential(plus) {
        minus
    } else {
        plus
    })
}

/// Returns `(f_s⁽⁰⁾, f_s⁽¹⁾)`.
pub fn f_s_split(q: &QTensor, nu: &Vec3, a: &AnchoringParams) -> Result<(f64, f64)> {
    check_unit(nu, "normal")?;
    Ok(anchoring_terms(q, nu, a))
}

pub(crate) fn anchoring_terms(q: &QTensor, nu: &Vec3, a: &AnchoringParams) -> (f64, f64) {
    let qnu = q.apply(nu);
    let normal = qnu.dot(nu) - a.beta;
    let tangential = (qnu - qnu.dot(nu) * nu).norm_squared();
    let n2 = normal * normal;
    (
        a.alpha0 * n2 + a.gamma0 * tangential,
        a.alpha1 * n2 + a.gamma1 * tangential,
    )
}

/// Orthonormal basis of the 15-dimensional space of admissible gradients:
/// `Eₐ ⊗ eₖ` for the traceless basis `Eₐ` and directions `eₖ`.
pub fn gradient_basis() -> Vec<GradQ> {
    let basis = traceless_basis();
    let mut out = Vec::with_capacity(15);
    for e in basis.iter() {
        for k in 0..3 {
            let mut slices = [Mat3::zeros(); 3];
            slices[k] = *e;
            out.push(GradQ::from_directional(&slices));
        }
    }
    out
}

/// Matrix of the quadratic form `g ↦ 2 f_e(g)` in [`gradient_basis`].
pub fn elastic_form_matrix(c: &ElasticConstants) -> DMatrix<f64> {
    let basis = gradient_basis();
    let n = basis.len();
    let diag: Vec<f64> = basis.iter().map(|b| f_e(b, c)).collect();
    DMatrix::from_fn(n, n, |a, b| {
        if a == b {
            2.0 * diag[a]
        } else {
            f_e(&basis[a].add(&basis[b]), c) - diag[a] - diag[b]
        }
    })
}

/// Smallest eigenvalue of `2 f_e` on admissible gradients. Positive iff the
/// elastic density is coercive.
pub fn coercivity_margin(c: &ElasticConstants) -> f64 {
    let eig = SymmetricEigen::new(elastic_form_matrix(c));
    eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Whether an anchoring coefficient enters at leading order or at first
/// order in the aspect ratio.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchoringOrder {
    Leading,
    FirstOrder,
}

/// Dimensional model inputs.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DimensionalParams {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub beta: f64,
    /// Diameter of the substrate.
    pub diameter: f64,
    /// Film half-thickness.
    pub h: f64,
    pub alpha_order: AnchoringOrder,
    pub gamma_order: AnchoringOrder,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct NonDimensional {
    pub elastic: ElasticConstants,
    pub ldg: LdGParams,
    pub anchoring: AnchoringParams,
    pub epsilon: f64,
}

pub fn nondimensionalize(d: &DimensionalParams) -> Result<NonDimensional> {
    if !(d.l1 > 0.0) || !(d.c > 0.0) || !(d.diameter > 0.0) {
        return Err(Error::InvalidInput("L1, c and D must be positive".into()));
    }
    if !(d.h > 0.0 && d.h < d.diameter) {
        return Err(Error::InvalidInput("thickness must satisfy 0 < h < D".into()));
    }
    let epsilon = d.h / d.diameter;
    let delta = (2.0 * d.l1 / (d.c * d.diameter * d.diameter)).sqrt();
    let ldg = LdGParams::new(d.a / d.c, d.b / d.c, delta)?;
    let alpha = d.alpha * d.diameter / d.l1;
    let gamma = d.gamma * d.diameter / d.l1;
    let split = |w: f64, order: AnchoringOrder| match order {
        AnchoringOrder::Leading => (w, 0.0),
        AnchoringOrder::FirstOrder => (0.0, w / epsilon),
    };
    let (alpha0, alpha1) = split(alpha, d.alpha_order);
    let (gamma0, gamma1) = split(gamma, d.gamma_order);
    Ok(NonDimensional {
        elastic: ElasticConstants::new(d.l2 / d.l1, d.l3 / d.l1),
        ldg,
        anchoring: AnchoringParams::new(alpha0, alpha1, gamma0, gamma1, d.beta)?,
        epsilon,
    })
}
