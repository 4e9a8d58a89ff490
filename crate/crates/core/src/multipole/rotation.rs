//! Rotation of expansion coefficients so that a translation vector points
//! along +z, where every translation operator is coaxial (it preserves
//! `m`). Rotating, translating coaxially and rotating back is the same
//! truncated operator as the general translation, at `O(p³)` instead of
//! `O(p⁴)`–`O(p⁵)` cost.
//!
//! Coefficients here multiply orthonormal surface harmonics `Y_nm`; callers
//! with other normalizations rescale per `(n, m)` first.
//!
//! Rotation tables are cached by polar angle, and distances and angles are
//! rounded to 40 mantissa bits before use, so a cached table is a function
//! of its key alone and results do not depend on which thread filled the
//! cache.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, RwLock};

use num_complex::Complex64 as C64;

use super::harmonics::{fill_negative, idx, len, sign, surface};
use crate::quadrature::gauss_legendre;
use crate::Vec3;

/// Round to 40 significant bits.
pub(crate) fn quantize(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    f64::from_bits((x.to_bits() + 0x800) & !0xfff)
}

/// Spherical angles and length of `b`; `theta` and `rho` are quantized.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Frame {
    pub theta: f64,
    pub phi: f64,
    pub rho: f64,
}

impl Frame {
    pub fn of(b: &Vec3) -> Self {
        let h = b.x.hypot(b.y);
        Self {
            theta: quantize(h.atan2(b.z)),
            phi: if h > 0.0 { b.y.atan2(b.x) } else { 0.0 },
            rho: quantize(b.norm()),
        }
    }
}

/// Coaxial operator: for each `m ≥ 0` a dense block mapping degrees
/// `n_in ≥ m` to `n_out ≥ m`.
pub(crate) struct Coaxial {
    p: usize,
    offsets: Vec<usize>,
    data: Vec<f64>,
}

impl Coaxial {
    pub fn zeros(p: usize) -> Self {
        let mut offsets = Vec::with_capacity(p + 1);
        let mut at = 0;
        for m in 0..=p {
            offsets.push(at);
            at += (p + 1 - m) * (p + 1 - m);
        }
        Self {
            p,
            offsets,
            data: vec![0.0; at],
        }
    }

    #[inline]
    pub fn at(&mut self, m: usize, n_out: usize, n_in: usize) -> &mut f64 {
        let w = self.p + 1 - m;
        &mut self.data[self.offsets[m] + (n_out - m) * w + (n_in - m)]
    }

    /// `out[n_out, m] = Σ C[m][n_out][n_in] inp[n_in, m]` for `m ≥ 0`.
    pub fn apply(&self, inp: &[C64], out: &mut [C64]) {
        let p = self.p;
        for m in 0..=p {
            let w = p + 1 - m;
            let block = &self.data[self.offsets[m]..self.offsets[m] + w * w];
            for no in m..=p {
                let row = &block[(no - m) * w..(no - m + 1) * w];
                let mut acc = C64::new(0.0, 0.0);
                for (ni, c) in (m..=p).zip(row) {
                    acc += *c * inp[idx(ni, m as isize)];
                }
                out[idx(no, m as isize)] = acc;
            }
        }
    }
}

pub(crate) struct Rotations {
    p: usize,
    /// Quadrature nodes and weights on the unit sphere.
    nodes: Vec<(Vec3, f64)>,
    /// `conj Y_nm` at each node.
    conj_y: Vec<Vec<C64>>,
    offsets: Vec<usize>,
    cache: RwLock<HashMap<u64, Arc<Vec<f64>>>>,
}

impl Rotations {
    pub fn new(p: usize) -> Self {
        let (x, w) = gauss_legendre(p + 1);
        let k = 2 * p + 2;
        let mut nodes = vec![];
        for (&c, &wc) in x.iter().zip(&w) {
            let s = (1.0 - c * c).sqrt();
            for j in 0..k {
                let phi = 2.0 * PI * j as f64 / k as f64;
                nodes.push((Vec3::new(s * phi.cos(), s * phi.sin(), c), wc * 2.0 * PI / k as f64));
            }
        }
        let mut y = vec![];
        let conj_y = nodes
            .iter()
            .map(|(v, _)| {
                surface(v, p, &mut y);
                y.iter().map(|c| c.conj()).collect()
            })
            .collect();
        let offsets = (0..=p).map(|n| (4 * n * n * n - n) / 3).collect();
        Self {
            p,
            nodes,
            conj_y,
            offsets,
            cache: RwLock::new(HashMap::new()),
        }
    }

    /// `d[n][m][m'] = ∫ Y_nm(R_y(θ) ŷ) conj Y_nm'(ŷ) dΩ`, real.
    fn table(&self, theta: f64) -> Arc<Vec<f64>> {
        let key = theta.to_bits();
        if let Some(t) = self.cache.read().expect("rotation cache").get(&key) {
            return t.clone();
        }
        let p = self.p;
        let (c, s) = (theta.cos(), theta.sin());
        let size = self.offsets[p] + (2 * p + 1) * (2 * p + 1);
        let mut acc = vec![C64::new(0.0, 0.0); size];
        let mut y = vec![];
        for ((v, w), cy) in self.nodes.iter().zip(&self.conj_y) {
            let r = Vec3::new(v.x * c + v.z * s, v.y, -v.x * s + v.z * c);
            surface(&r, p, &mut y);
            for n in 0..=p {
                let ni = n as isize;
                let base = self.offsets[n];
                let width = 2 * n + 1;
                for m in -ni..=ni {
                    let a = *w * y[idx(n, m)];
                    let row = base + (m + ni) as usize * width;
                    for mp in -ni..=ni {
                        acc[row + (mp + ni) as usize] += a * cy[idx(n, mp)];
                    }
                }
            }
        }
        let table = Arc::new(acc.iter().map(|z| z.re).collect::<Vec<f64>>());
        self.cache.write().expect("rotation cache").entry(key).or_insert(table).clone()
    }

    fn phases(&self, phi: f64) -> Vec<C64> {
        (0..=self.p).map(|m| C64::from_polar(1.0, m as f64 * phi)).collect()
    }

    /// Coefficients in the frame where `frame`'s direction is +z
    /// (`m ≥ 0` entries only).
    pub fn forward(&self, frame: &Frame, c: &[C64]) -> Vec<C64> {
        let p = self.p;
        let t = self.table(frame.theta);
        let e = self.phases(frame.phi);
        // c_nm e^{imφ} for all m; m < 0 by symmetry of e
        let mut rot = vec![C64::new(0.0, 0.0); len(p)];
        let mut tmp = vec![C64::new(0.0, 0.0); 2 * p + 1];
        for n in 0..=p {
            let ni = n as isize;
            for m in -ni..=ni {
                let ph = if m >= 0 { e[m as usize] } else { e[(-m) as usize].conj() };
                tmp[(m + ni) as usize] = c[idx(n, m)] * ph;
            }
            let base = self.offsets[n];
            let width = 2 * n + 1;
            for mp in 0..=ni {
                let mut acc = C64::new(0.0, 0.0);
                for m in -ni..=ni {
                    acc += tmp[(m + ni) as usize] * t[base + (m + ni) as usize * width + (mp + ni) as usize];
                }
                rot[idx(n, mp)] = acc;
            }
        }
        rot
    }

    /// Inverse of [`forward`](Self::forward): takes `m ≥ 0` entries of a
    /// real field's coefficients and adds the full rotated-back set to `out`.
    pub fn backward_add(&self, frame: &Frame, e_rot: &[C64], out: &mut [C64]) {
        let p = self.p;
        let t = self.table(frame.theta);
        let e = self.phases(frame.phi);
        let mut full = vec![C64::new(0.0, 0.0); 2 * p + 1];
        for n in 0..=p {
            let ni = n as isize;
            for mp in 0..=ni {
                let v = e_rot[idx(n, mp)];
                full[(mp + ni) as usize] = v;
                full[(ni - mp) as usize] = sign(mp) * v.conj();
            }
            let base = self.offsets[n];
            let width = 2 * n + 1;
            for m in 0..=ni {
                let row = base + (m + ni) as usize * width;
                let mut acc = C64::new(0.0, 0.0);
                for mp in -ni..=ni {
                    acc += full[(mp + ni) as usize] * t[row + (mp + ni) as usize];
                }
                out[idx(n, m)] += acc * e[m as usize].conj();
            }
        }
        fill_negative(p, out);
    }
}
