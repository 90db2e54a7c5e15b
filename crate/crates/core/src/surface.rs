//! Surfaces of revolution `Ψ(s,θ) = (a₁(s) cos θ, a₁(s) sin θ, a₂(s))` with an
//! arclength-parametrized profile `r(s) = (a₁, a₂)`, `r′ = (cos φ, sin φ)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qtensor::{Frame, Mat3, Vec3};

const PROFILE_TOL: f64 = 1e-10;
const DOMAIN_SLACK: f64 = 1e-12;
const VALIDATION_SAMPLES: usize = 257;

/// An arclength-parametrized meridian. All derivatives are analytic.
pub trait Profile: Send + Sync {
    fn a1(&self, s: f64) -> f64;
    fn a2(&self, s: f64) -> f64;
    fn phi(&self, s: f64) -> f64;
    fn dphi(&self, s: f64) -> f64;
    fn da1(&self, s: f64) -> f64;
    fn da2(&self, s: f64) -> f64;
    fn name(&self) -> String {
        "custom".into()
    }
}

/// The named surfaces available from configuration files and the CLI.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BuiltinProfile {
    /// Cone of half-opening `π/2 - φ₀`: `a₁ = s cos φ₀`, `a₂ = s sin φ₀`.
    Frustum { phi0: f64 },
    /// `a₁ = R`, `a₂ = s`.
    Cylinder { radius: f64 },
    /// `φ = s/R`, `a₁ = R sin(s/R)`, `a₂ = -R cos(s/R)`.
    SphereCap { radius: f64 },
    /// The plane `a₁ = s`, `a₂ = 0`.
    PlaneAnnulus,
}

impl Profile for BuiltinProfile {
    fn a1(&self, s: f64) -> f64 {
        match *self {
            BuiltinProfile::Frustum { phi0 } => s * phi0.cos(),
            BuiltinProfile::Cylinder { radius } => radius,
            BuiltinProfile::SphereCap { radius } => radius * (s / radius).sin(),
            BuiltinProfile::PlaneAnnulus => s,
        }
    }

    fn a2(&self, s: f64) -> f64 {
        match *self {
            BuiltinProfile::Frustum { phi0 } => s * phi0.sin(),
            BuiltinProfile::Cylinder { .. } => s,
            BuiltinProfile::SphereCap { radius } => -radius * (s / radius).cos(),
            BuiltinProfile::PlaneAnnulus => 0.0,
        }
    }

    fn phi(&self, s: f64) -> f64 {
        match *self {
            BuiltinProfile::Frustum { phi0 } => phi0,
            BuiltinProfile::Cylinder { .. } => std::f64::consts::FRAC_PI_2,
            BuiltinProfile::SphereCap { radius } => s / radius,
            BuiltinProfile::PlaneAnnulus => 0.0,
        }
    }

    fn dphi(&self, _s: f64) -> f64 {
        match *self {
            BuiltinProfile::SphereCap { radius } => 1.0 / radius,
            _ => 0.0,
        }
    }

    fn da1(&self, s: f64) -> f64 {
        match *self {
            BuiltinProfile::Frustum { phi0 } => phi0.cos(),
            BuiltinProfile::Cylinder { .. } => 0.0,
            BuiltinProfile::SphereCap { radius } => (s / radius).cos(),
            BuiltinProfile::PlaneAnnulus => 1.0,
        }
    }

    fn da2(&self, s: f64) -> f64 {
        match *self {
            BuiltinProfile::Frustum { phi0 } => phi0.sin(),
            BuiltinProfile::Cylinder { .. } => 1.0,
            BuiltinProfile::SphereCap { radius } => (s / radius).sin(),
            BuiltinProfile::PlaneAnnulus => 0.0,
        }
    }

    fn name(&self) -> String {
        match self {
            BuiltinProfile::Frustum { .. } => "frustum",
            BuiltinProfile::Cylinder { .. } => "cylinder",
            BuiltinProfile::SphereCap { .. } => "sphere-cap",
            BuiltinProfile::PlaneAnnulus => "plane-annulus",
        }
        .into()
    }
}

type ScalarFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// A profile given by closures for `a₁, a₂, φ, φ′`. The derivatives of
/// `a₁, a₂` are taken as `cos φ`, `sin φ`.
pub struct ClosureProfile {
    pub a1: ScalarFn,
    pub a2: ScalarFn,
    pub phi: ScalarFn,
    pub dphi: ScalarFn,
}

impl Profile for ClosureProfile {
    fn a1(&self, s: f64) -> f64 {
        (self.a1)(s)
    }
    fn a2(&self, s: f64) -> f64 {
        (self.a2)(s)
    }
    fn phi(&self, s: f64) -> f64 {
        (self.phi)(s)
    }
    fn dphi(&self, s: f64) -> f64 {
        (self.dphi)(s)
    }
    fn da1(&self, s: f64) -> f64 {
        self.phi(s).cos()
    }
    fn da2(&self, s: f64) -> f64 {
        self.phi(s).sin()
    }
}

#[derive(Clone)]
pub struct SurfaceOfRevolution {
    profile: Arc<dyn Profile>,
    s0: f64,
    length: f64,
}

impl fmt::Debug for SurfaceOfRevolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SurfaceOfRevolution")
            .field("profile", &self.profile.name())
            .field("s0", &self.s0)
            .field("length", &self.length)
            .finish()
    }
}

/// Orthonormal frame along the meridian, the parallel and the normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FramePoint {
    pub t: Vec3,
    pub n: Vec3,
    pub nu: Vec3,
}

impl FramePoint {
    pub fn to_frame(&self) -> Frame {
        Frame::new(self.t, self.n, self.nu).expect("surface frame is orthonormal")
    }

    pub fn orthonormality_defect(&self) -> f64 {
        let m = Mat3::from_columns(&[self.t, self.n, self.nu]);
        let d = (m.transpose() * m - Mat3::identity()).amax();
        d.max((m.determinant() - 1.0).abs())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvatureData {
    pub kappa_t: f64,
    pub kappa_n: f64,
    pub first_ff: Matrix2<f64>,
    pub second_ff: Matrix2<f64>,
}

/// `A = -𝕀⁻¹𝕀𝕀` in `(s, θ)` coordinates, with eigenvalues along `T` and `N`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapeOperator {
    pub matrix: Matrix2<f64>,
    pub eigenvalues: [f64; 2],
}

impl SurfaceOfRevolution {
    /// Builds a surface on `s ∈ [s0, s0 + length]`, checking that the
    /// profile is unit speed and stays off the axis.
    pub fn new(profile: Arc<dyn Profile>, s0: f64, length: f64) -> Result<Self> {
        if !(length > 0.0) || !s0.is_finite() {
            return Err(Error::InvalidInput(format!(
                "surface domain needs finite s0 and length > 0 (got s0={s0}, L={length})"
            )));
        }
        let surf = SurfaceOfRevolution {
            profile,
            s0,
            length,
        };
        surf.validate()?;
        Ok(surf)
    }

    pub fn builtin(profile: BuiltinProfile, s0: f64, length: f64) -> Result<Self> {
        Self::new(Arc::new(profile), s0, length)
    }

    fn validate(&self) -> Result<()> {
        let p = &self.profile;
        for i in 0..VALIDATION_SAMPLES {
            let s = self.s0 + self.length * i as f64 / (VALIDATION_SAMPLES - 1) as f64;
            let a1 = p.a1(s);
            if !(a1 > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "profile touches the axis: a1({s}) = {a1}"
                )));
            }
            let phi = p.phi(s);
            let dev = (p.da1(s) - phi.cos()).abs().max((p.da2(s) - phi.sin()).abs());
            if !(dev <= PROFILE_TOL) {
                return Err(Error::InvalidInput(format!(
                    "profile is not unit speed at s = {s}: r' differs from (cos phi, sin phi) by {dev:e}"
                )));
            }
        }
        Ok(())
    }

    pub fn profile(&self) -> &dyn Profile {
        self.profile.as_ref()
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn s1(&self) -> f64 {
        self.s0 + self.length
    }

    fn check_s(&self, s: f64) -> Result<()> {
        let slack = DOMAIN_SLACK * self.length.max(1.0);
        if s >= self.s0 - slack && s <= self.s1() + slack {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                s,
                lo: self.s0,
                hi: self.s1(),
            })
        }
    }

    pub fn a1(&self, s: f64) -> Result<f64> {
        self.check_s(s)?;
        Ok(self.profile.a1(s))
    }

    pub fn phi(&self, s: f64) -> Result<f64> {
        self.check_s(s)?;
        Ok(self.profile.phi(s))
    }

    /// The embedding `Ψ(s, θ)`.
    pub fn point(&self, s: f64, theta: f64) -> Result<Vec3> {
        self.check_s(s)?;
        let a1 = self.profile.a1(s);
        Ok(Vec3::new(a1 * theta.cos(), a1 * theta.sin(), self.profile.a2(s)))
    }

    pub fn frame_at(&self, s: f64, theta: f64) -> Result<FramePoint> {
        self.check_s(s)?;
        Ok(frame_from_angles(self.profile.phi(s), theta))
    }

    pub fn curvatures(&self, s: f64) -> Result<CurvatureData> {
        self.check_s(s)?;
        let p = &self.profile;
        let (a1, phi, dphi) = (p.a1(s), p.phi(s), p.dphi(s));
        Ok(CurvatureData {
            kappa_t: dphi,
            kappa_n: phi.sin() / a1,
            first_ff: Matrix2::new(1.0, 0.0, 0.0, a1 * a1),
            second_ff: Matrix2::new(dphi, 0.0, 0.0, a1 * phi.sin()),
        })
    }

    pub fn shape_operator(&self, s: f64) -> Result<ShapeOperator> {
        let c = self.curvatures(s)?;
        let inv = c
            .first_ff
            .try_inverse()
            .ok_or_else(|| Error::InvalidInput("degenerate first fundamental form".into()))?;
        let matrix = -inv * c.second_ff;
        Ok(ShapeOperator {
            matrix,
            eigenvalues: [matrix[(0, 0)], matrix[(1, 1)]],
        })
    }

    /// `∇_M ν = -κ_T T⊗T - κ_N N⊗N`, which has `ν` in its kernel.
    pub fn ambient_shape_operator(&self, s: f64, theta: f64) -> Result<Mat3> {
        let f = self.frame_at(s, theta)?;
        let c = self.curvatures(s)?;
        Ok(-c.kappa_t * f.t * f.t.transpose() - c.kappa_n * f.n * f.n.transpose())
    }

    /// `dA = a₁ ds dθ`.
    pub fn area_element(&self, s: f64) -> Result<f64> {
        self.a1(s)
    }

    /// `sup |κ|` over the domain, sampled densely including both ends.
    pub fn max_abs_curvature(&self) -> f64 {
        let n = 4096;
        (0..=n)
            .map(|i| {
                let s = self.s0 + self.length * i as f64 / n as f64;
                let c = self.curvatures(s).expect("sample inside domain");
                c.kappa_t.abs().max(c.kappa_n.abs())
            })
            .fold(0.0, f64::max)
    }

    /// Largest aspect ratio for which the normal coordinates do not fold:
    /// `1 / sup|κ|` (infinite for a flat surface).
    pub fn fold_bound(&self) -> f64 {
        1.0 / self.max_abs_curvature()
    }

    pub fn check_fold(&self, eps: f64) -> Result<()> {
        let bound = self.fold_bound();
        if eps > 0.0 && eps < bound {
            Ok(())
        } else {
            Err(Error::Fold { eps, bound })
        }
    }
}

/// `T = (cos φ cos θ, cos φ sin θ, sin φ)`, `N = (-sin θ, cos θ, 0)`,
/// `ν = (-sin φ cos θ, -sin φ sin θ, cos φ)`.
pub fn frame_from_angles(phi: f64, theta: f64) -> FramePoint {
    let (sp, cp) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    FramePoint {
        t: Vec3::new(cp * ct, cp * st, sp),
        n: Vec3::new(-st, ct, 0.0),
        nu: Vec3::new(-sp * ct, -sp * st, cp),
    }
}
