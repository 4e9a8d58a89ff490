//! Laplace and Yukawa Green's functions, their normal derivatives, and the
//! near-field patch integrals.
//!
//! Conventions: `p` is the target (evaluation) point with normal `n0`, `t`
//! the source point with normal `n`. `dn` differentiates with respect to `t`
//! along `n`, `dn0` with respect to `p` along `n0`.

use std::f64::consts::PI;

use thiserror::Error;

use crate::quadrature::{self, Point};
use crate::surface::NodePatch;
use crate::Vec3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("kernel evaluated at coincident points {0:?}")]
    Singular([f64; 3]),
    #[error("invalid physical parameters: {0}")]
    InvalidConfig(String),
    #[error("near-field integral between nodes at {target:?} and {origin:?} is not finite")]
    NonFinite { target: [f64; 3], origin: [f64; 3] },
}

/// Dielectric, ionic and nonpolar parameters of the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConfig {
    pub eps_int: f64,
    pub eps_ext: f64,
    /// Ionic strength, mM.
    pub ionic_strength: f64,
    /// Temperature, K.
    pub temperature: f64,
    /// Inverse Debye length, Å⁻¹.
    pub kappa: f64,
    /// kcal/(mol·Å²).
    pub surface_tension: f64,
    /// kcal/(mol·Å³).
    pub pressure: f64,
}

impl Default for PhysicalConfig {
    fn default() -> Self {
        Self::new(2.0, 80.0, 150.0, 300.0)
    }
}

impl PhysicalConfig {
    /// κ is derived from the ionic strength; nonpolar coefficients are zero.
    pub fn new(eps_int: f64, eps_ext: f64, ionic_strength: f64, temperature: f64) -> Self {
        let mut cfg = Self {
            eps_int,
            eps_ext,
            ionic_strength,
            temperature,
            kappa: 0.0,
            surface_tension: 0.0,
            pressure: 0.0,
        };
        cfg.kappa = crate::solver::compute_kappa(&cfg);
        cfg
    }

    /// Override κ directly, leaving the ionic strength untouched.
    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    /// ε̄ = ε_ext / ε_int.
    pub fn eps_bar(&self) -> f64 {
        self.eps_ext / self.eps_int
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        let checks = [
            (self.eps_int > 0.0, "interior dielectric must be positive"),
            (self.eps_ext > 0.0, "exterior dielectric must be positive"),
            (self.kappa >= 0.0 && self.kappa.is_finite(), "kappa must be finite and non-negative"),
            (self.temperature > 0.0, "temperature must be positive"),
            (self.ionic_strength >= 0.0, "ionic strength must be non-negative"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(KernelError::InvalidConfig((*msg).into())),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KernelValues {
    pub value: f64,
    pub dn: f64,
    pub dn0: f64,
    pub dn0dn: f64,
}

const FOUR_PI: f64 = 4.0 * PI;

/// Combine a radial profile `k(r)` with its first two derivatives into the
/// four directional quantities.
#[inline]
fn directional(d: Vec3, r: f64, n: &Vec3, n0: &Vec3, k: f64, k1: f64, k2: f64) -> KernelValues {
    let dh = d / r;
    let a = dh.dot(n);
    let b = dh.dot(n0);
    KernelValues {
        value: k,
        dn: k1 * a,
        dn0: -k1 * b,
        dn0dn: -(k2 * a * b + k1 / r * (n.dot(n0) - a * b)),
    }
}

#[inline]
fn separation(p: &Vec3, t: &Vec3) -> Result<(Vec3, f64), KernelError> {
    let d = t - p;
    let r = d.norm();
    if r == 0.0 {
        return Err(KernelError::Singular([p.x, p.y, p.z]));
    }
    Ok((d, r))
}

/// `G = 1/(4πr)` and its derivatives.
#[inline]
pub fn eval_laplace(p: &Vec3, t: &Vec3, n: &Vec3, n0: &Vec3) -> Result<KernelValues, KernelError> {
    let (d, r) = separation(p, t)?;
    let k = 1.0 / (FOUR_PI * r);
    Ok(directional(d, r, n, n0, k, -k / r, 2.0 * k / (r * r)))
}

/// `u = e^{-κr}/(4πr)` and its derivatives; identical to [`eval_laplace`]
/// when `κ = 0`.
#[inline]
pub fn eval_yukawa(p: &Vec3, t: &Vec3, n: &Vec3, n0: &Vec3, kappa: f64) -> Result<KernelValues, KernelError> {
    if kappa == 0.0 {
        return eval_laplace(p, t, n, n0);
    }
    let (d, r) = separation(p, t)?;
    let x = kappa * r;
    let k = (-x).exp() / (FOUR_PI * r);
    let k1 = -k * (1.0 + x) / r;
    let k2 = k * (2.0 + 2.0 * x + x * x) / (r * r);
    Ok(directional(d, r, n, n0, k, k1, k2))
}

/// `1 - e^{-x}(1+x)` without cancellation for small `x`.
fn screen1(x: f64) -> f64 {
    if x >= 1.0 {
        return 1.0 - (-x).exp() * (1.0 + x);
    }
    // Σ_{k≥2} (-1)^k (k-1) x^k / k!
    let mut term = -x; // (-1)^k x^k / k! at k = 1
    let mut sum = 0.0;
    for k in 2..40 {
        term *= -x / k as f64;
        let add = (k - 1) as f64 * term;
        sum += add;
        if add.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// `2 - e^{-x}(2 + 2x + x²)` without cancellation for small `x`.
fn screen2(x: f64) -> f64 {
    if x >= 1.0 {
        return 2.0 - (-x).exp() * (2.0 + 2.0 * x + x * x);
    }
    // Σ_{k≥3} (-1)^{k+1} (k-1)(k-2) x^k / k!
    let mut term = x * x / 2.0; // (-1)^k x^k / k! at k = 2
    let mut sum = 0.0;
    for k in 3..40 {
        term *= -x / k as f64;
        let add = -((k - 1) * (k - 2)) as f64 * term;
        sum += add;
        if add.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// The difference kernel `G - u` and its derivatives, evaluated without
/// cancellation so it stays accurate as `κr → 0`. Exactly zero when `κ = 0`.
#[inline]
pub fn eval_difference(p: &Vec3, t: &Vec3, n: &Vec3, n0: &Vec3, kappa: f64) -> Result<KernelValues, KernelError> {
    let (d, r) = separation(p, t)?;
    if kappa == 0.0 {
        return Ok(KernelValues::default());
    }
    let x = kappa * r;
    let g = 1.0 / (FOUR_PI * r);
    let k = -(-x).exp_m1() * g;
    let k1 = -screen1(x) * g / r;
    let k2 = screen2(x) * g / (r * r);
    Ok(directional(d, r, n, n0, k, k1, k2))
}

/// The four near-field integrals of one source patch seen from one target node.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Coefficients {
    /// ∮ (G − u)
    pub a: f64,
    /// ∮ ((1/ε̄) ∂G/∂n − ∂u/∂n)
    pub b: f64,
    /// ∮ (∂G/∂n₀ − (1/ε̄) ∂u/∂n₀)
    pub c: f64,
    /// (1/ε̄) ∮ (∂²G/∂n₀∂n − ∂²u/∂n₀∂n)
    pub d: f64,
}

/// Cached near-field coefficients for one (target, source) node pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearFieldBlock {
    pub target: usize,
    pub source: usize,
    pub coefficients: Coefficients,
}

impl NearFieldBlock {
    pub fn compute(target: usize, source: usize, patches: &[NodePatch], cfg: &PhysicalConfig) -> Result<Self, KernelError> {
        Ok(Self {
            target,
            source,
            coefficients: near_coefficients(&patches[target], &patches[source], cfg)?,
        })
    }
}

/// Quadrature parameters of [`near_coefficients_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearQuadrature {
    /// Gauss-Legendre points per direction of the Duffy rule on self patches.
    pub duffy_order: usize,
    /// A sub-element closer than `ratio × diameter` to the target is refined.
    pub ratio: f64,
    /// Maximum number of 4-way refinements.
    pub depth: u32,
}

impl Default for NearQuadrature {
    fn default() -> Self {
        Self {
            duffy_order: 6,
            ratio: 2.5,
            depth: 3,
        }
    }
}

/// Near-field integrals of patch `t` seen from the node of patch `p`, with
/// the default quadrature.
pub fn near_coefficients(p: &NodePatch, t: &NodePatch, cfg: &PhysicalConfig) -> Result<Coefficients, KernelError> {
    near_coefficients_with(p, t, cfg, &NearQuadrature::default())
}

/// Each coefficient is split into a Laplace part scaled by `(1/ε̄ − 1)` or
/// `(1 − 1/ε̄)` and a difference-kernel part, e.g.
/// `B = (1/ε̄ − 1)∮∂G/∂n + ∮∂(G−u)/∂n`. On the self patch the Laplace parts
/// are dropped: `∂G/∂n` vanishes identically on flat sub-elements through the
/// node, and `∂G/∂n₀` is taken in the node's tangent plane, where it also
/// vanishes. The remaining difference kernels are at most `O(1/r)` and are
/// integrated with a Duffy rule centred on the node.
pub fn near_coefficients_with(
    p: &NodePatch,
    t: &NodePatch,
    cfg: &PhysicalConfig,
    quad: &NearQuadrature,
) -> Result<Coefficients, KernelError> {
    let inv = 1.0 / cfg.eps_bar();
    let kappa = cfg.kappa;
    let x0 = p.position;
    let n0 = p.normal;
    let is_self = p.position == t.position;
    let gl = is_self.then(|| quadrature::gauss_legendre(quad.duffy_order));

    let mut lap = KernelValues::default();
    let mut diff = KernelValues::default();
    let mut points: Vec<Point> = Vec::with_capacity(64);
    for s in &t.sub_elements {
        points.clear();
        if let Some(gl) = &gl {
            quadrature::duffy(&s.corners, gl, &mut points);
        } else {
            quadrature::graded(&s.corners, &x0, quad.ratio, quad.depth, &mut points);
        }
        for q in &points {
            let dv = eval_difference(&x0, &q.x, &s.normal, &n0, kappa)?;
            diff.value += q.w * dv.value;
            diff.dn += q.w * dv.dn;
            diff.dn0 += q.w * dv.dn0;
            diff.dn0dn += q.w * dv.dn0dn;
            if !is_self {
                let lv = eval_laplace(&x0, &q.x, &s.normal, &n0)?;
                lap.dn += q.w * lv.dn;
                lap.dn0 += q.w * lv.dn0;
            }
        }
    }
    let coefficients = Coefficients {
        a: diff.value,
        b: (inv - 1.0) * lap.dn + diff.dn,
        c: (1.0 - inv) * lap.dn0 + inv * diff.dn0,
        d: inv * diff.dn0dn,
    };
    let all = [coefficients.a, coefficients.b, coefficients.c, coefficients.d];
    if all.iter().all(|v| v.is_finite()) {
        Ok(coefficients)
    } else {
        Err(KernelError::NonFinite {
            target: [x0.x, x0.y, x0.z],
            origin: [t.position.x, t.position.y, t.position.z],
        })
    }
}
