//! Truncated multipole and local expansions for the Laplace kernel
//! `1/(4πr)` and the Yukawa kernel `e^{-κr}/(4πr)`, with monopole
//! (single-layer) and dipole (double-layer) sources.
//!
//! Laplace expansions use solid harmonics; Yukawa expansions use modified
//! spherical Bessel functions times surface harmonics, with coefficients
//! scaled by powers of `κ·radius` of their box so that high orders neither
//! overflow nor underflow. Coefficients are stored for all `|m| ≤ n ≤ p`
//! (see [`harmonics::idx`]); every field here is real, so `m < 0` entries are
//! conjugates of `m > 0` ones.

pub mod bessel;
pub mod gaunt;
pub mod harmonics;
mod laplace;
mod rotation;
mod yukawa;

use num_complex::Complex64 as C64;

use crate::kernels::{eval_laplace, eval_yukawa, KernelError};
use crate::Vec3;

/// Free-space kernel of a view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Laplace,
    /// Screened kernel with inverse screening length κ > 0 (Å⁻¹).
    Yukawa(f64),
}

/// Which source components a view carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Layer {
    /// Monopoles only.
    Single,
    /// Dipoles only.
    Double,
    /// Both; the far-field passes of the boundary operator use this.
    Combined,
}

impl Layer {
    pub fn charges(self) -> bool {
        self != Layer::Double
    }
    pub fn dipoles(self) -> bool {
        self != Layer::Single
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct View {
    pub kernel: Kernel,
    pub layer: Layer,
}

/// Expansion orders `(Laplace, Yukawa)` for an accuracy class, tuned so that
/// random-point far fields reach relative ℓ₂ error `10^-accuracy`.
///
/// At accuracy 6 the Laplace order is 14: at 12 the gradient of the
/// single-layer view and the potential of the double-layer view sit just
/// above `1e-6` on 5000 uniform points.
///
/// # Panics
/// For classes other than 3 and 6.
pub fn orders_for_accuracy(accuracy: u32) -> (usize, usize) {
    match accuracy {
        3 => (6, 8),
        6 => (14, 16),
        other => panic!("unsupported accuracy class {other}"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpansionKind {
    Multipole,
    Local,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    pub kind: ExpansionKind,
    pub kernel: Kernel,
    pub center: Vec3,
    pub order: usize,
    /// `κ·radius` for Yukawa, 1 for Laplace.
    pub scale: f64,
    pub coeffs: Vec<C64>,
}

impl Expansion {
    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == C64::new(0.0, 0.0))
    }
}

/// The expansions of one box, one per view.
#[derive(Debug, Clone)]
pub struct ViewSet {
    pub box_id: usize,
    pub views: Vec<Expansion>,
}

/// A point source: monopole `charge` plus `dipole` (the potential of a
/// dipole `d` at `y` is `d·∇_y K(x, y)`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceDensity {
    pub position: Vec3,
    pub charge: f64,
    pub dipole: Vec3,
}

/// An evaluation point. `dn0` receives the gradient along `normal`; a zero
/// normal skips gradient work.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetAccumulator {
    pub position: Vec3,
    pub normal: Vec3,
    pub potential: f64,
    pub dn0: f64,
}

impl TargetAccumulator {
    pub fn new(position: Vec3, normal: Vec3) -> Self {
        Self {
            position,
            normal,
            potential: 0.0,
            dn0: 0.0,
        }
    }

    pub fn reset(&mut self) {
        self.potential = 0.0;
        self.dn0 = 0.0;
    }
}

enum Imp {
    Laplace(laplace::Laplace),
    Yukawa(Box<yukawa::Yukawa>),
}

/// Precomputed tables for every translation operator of one kernel at one
/// order. Immutable and shareable between threads.
pub struct Translator {
    kernel: Kernel,
    order: usize,
    imp: Imp,
}

impl Translator {
    /// Yukawa with `κ ≤ 0` is rejected; use the Laplace kernel instead.
    pub fn new(kernel: Kernel, order: usize) -> Result<Self, KernelError> {
        let imp = match kernel {
            Kernel::Laplace => Imp::Laplace(laplace::Laplace::new(order)),
            Kernel::Yukawa(k) if k > 0.0 && k.is_finite() => Imp::Yukawa(Box::new(yukawa::Yukawa::new(order, k))),
            Kernel::Yukawa(k) => {
                return Err(KernelError::InvalidConfig(format!(
                    "Yukawa expansions need kappa > 0 (got {k}); use the Laplace kernel"
                )))
            }
        };
        Ok(Self { kernel, order, imp })
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Coefficient scale for a box of the given radius.
    pub fn scale_for(&self, radius: f64) -> f64 {
        match self.kernel {
            Kernel::Laplace => 1.0,
            Kernel::Yukawa(k) => k * radius,
        }
    }

    pub fn zero(&self, kind: ExpansionKind, center: Vec3, radius: f64) -> Expansion {
        Expansion {
            kind,
            kernel: self.kernel,
            center,
            order: self.order,
            scale: self.scale_for(radius),
            coeffs: vec![C64::new(0.0, 0.0); harmonics::len(self.order)],
        }
    }

    fn check(&self, e: &Expansion, kind: ExpansionKind) {
        debug_assert_eq!(e.kind, kind);
        debug_assert_eq!(e.order, self.order);
        debug_assert_eq!(e.kernel, self.kernel);
    }

    /// Add the multipole expansion of `sources` about `out.center`.
    pub fn s_to_m(&self, sources: &[SourceDensity], out: &mut Expansion) {
        self.check(out, ExpansionKind::Multipole);
        match &self.imp {
            Imp::Laplace(l) => l.s_to_m(sources, out),
            Imp::Yukawa(y) => y.s_to_m(sources, out),
        }
    }

    /// Add the local expansion about `out.center` of distant `sources`.
    pub fn s_to_l(&self, sources: &[SourceDensity], out: &mut Expansion) {
        self.check(out, ExpansionKind::Local);
        match &self.imp {
            Imp::Laplace(l) => l.s_to_l(sources, out),
            Imp::Yukawa(y) => y.s_to_l(sources, out),
        }
    }

    /// Add `child` re-centred at `parent.center`.
    pub fn m_to_m(&self, child: &Expansion, parent: &mut Expansion) {
        self.check(child, ExpansionKind::Multipole);
        self.check(parent, ExpansionKind::Multipole);
        match &self.imp {
            Imp::Laplace(l) => l.m_to_m(child, parent),
            Imp::Yukawa(y) => y.m_to_m(child, parent),
        }
    }

    /// Add the local expansion about `local.center` of a distant multipole.
    pub fn m_to_l(&self, multipole: &Expansion, local: &mut Expansion) {
        self.check(multipole, ExpansionKind::Multipole);
        self.check(local, ExpansionKind::Local);
        match &self.imp {
            Imp::Laplace(l) => l.m_to_l(multipole, local),
            Imp::Yukawa(y) => y.m_to_l(multipole, local),
        }
    }

    /// Add `parent` re-centred at `child.center`.
    pub fn l_to_l(&self, parent: &Expansion, child: &mut Expansion) {
        self.check(parent, ExpansionKind::Local);
        self.check(child, ExpansionKind::Local);
        match &self.imp {
            Imp::Laplace(l) => l.l_to_l(parent, child),
            Imp::Yukawa(y) => y.l_to_l(parent, child),
        }
    }

    /// Add potential and normal derivative of a local expansion.
    pub fn l_to_t(&self, local: &Expansion, targets: &mut [TargetAccumulator]) {
        self.check(local, ExpansionKind::Local);
        match &self.imp {
            Imp::Laplace(l) => l.l_to_t(local, targets),
            Imp::Yukawa(y) => y.l_to_t(local, targets),
        }
    }

    /// Add potential and normal derivative of a multipole expansion.
    pub fn m_to_t(&self, multipole: &Expansion, targets: &mut [TargetAccumulator]) {
        self.check(multipole, ExpansionKind::Multipole);
        match &self.imp {
            Imp::Laplace(l) => l.m_to_t(multipole, targets),
            Imp::Yukawa(y) => y.m_to_t(multipole, targets),
        }
    }

    /// Direct summation; coincident source/target pairs are skipped.
    pub fn s_to_t(&self, sources: &[SourceDensity], targets: &mut [TargetAccumulator]) {
        s_to_t(self.kernel, sources, targets)
    }
}

/// Direct summation of potential and normal derivative at every target.
/// Coincident source/target pairs contribute nothing.
pub fn s_to_t(kernel: Kernel, sources: &[SourceDensity], targets: &mut [TargetAccumulator]) {
    let kappa = match kernel {
        Kernel::Laplace => 0.0,
        Kernel::Yukawa(k) => k,
    };
    for t in targets.iter_mut() {
        let (mut pot, mut dn0) = (0.0, 0.0);
        for s in sources {
            let v = if kappa == 0.0 {
                eval_laplace(&t.position, &s.position, &s.dipole, &t.normal)
            } else {
                eval_yukawa(&t.position, &s.position, &s.dipole, &t.normal, kappa)
            };
            if let Ok(v) = v {
                pot += s.charge * v.value + v.dn;
                dn0 += s.charge * v.dn0 + v.dn0dn;
            }
        }
        t.potential += pot;
        t.dn0 += dn0;
    }
}

/// Multipole expansion of `sources` about `center`, for a box of `radius`.
pub fn s_to_m(sources: &[SourceDensity], center: Vec3, radius: f64, order: usize, kernel: Kernel) -> Result<Expansion, KernelError> {
    let t = Translator::new(kernel, order)?;
    let mut e = t.zero(ExpansionKind::Multipole, center, radius);
    t.s_to_m(sources, &mut e);
    Ok(e)
}

/// Local expansion about `center` of distant `sources`.
pub fn s_to_l(sources: &[SourceDensity], center: Vec3, radius: f64, order: usize, kernel: Kernel) -> Result<Expansion, KernelError> {
    let t = Translator::new(kernel, order)?;
    let mut e = t.zero(ExpansionKind::Local, center, radius);
    t.s_to_l(sources, &mut e);
    Ok(e)
}

/// Complex `|d| Y_1μ(d̂) / sqrt(3/(4π))` for `μ = -1, 0, 1`, indexed `μ + 1`.
#[inline]
pub(crate) fn dipole_harmonics(d: &Vec3) -> [C64; 3] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [C64::new(s * d.x, -s * d.y), C64::new(d.z, 0.0), C64::new(-s * d.x, -s * d.y)]
}
