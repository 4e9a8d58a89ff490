//! Laplace translations with solid harmonics. The `1/(4π)` of the kernel is
//! folded into source-to-expansion operators; expansions are unscaled.
//!
//! Multipole field: `Re Σ M_nm Θ_nm(x - c)`. Local field: `Re Σ L_nm Υ_nm(x - c)`.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use super::harmonics::{fill_negative, idx, irregular, len, regular, sign};
use super::rotation::{Frame, Rotations};
use super::{Expansion, SourceDensity, TargetAccumulator};
use crate::Vec3;

const INV_4PI: f64 = 1.0 / (4.0 * PI);

/// `Υ_1l(d)` for `l = -1, 0, 1`, indexed `l + 1`.
#[inline]
fn ups1(d: &Vec3) -> [C64; 3] {
    [C64::new(0.5 * d.x, -0.5 * d.y), C64::new(d.z, 0.0), C64::new(-0.5 * d.x, -0.5 * d.y)]
}

pub struct Laplace {
    p: usize,
    /// `sqrt((n-m)!(n+m)!)`: multipole coefficients times this, and local
    /// coefficients divided by it, multiply orthonormal `Y_nm`.
    norm: Vec<f64>,
    rot: Rotations,
}

impl Laplace {
    pub fn new(p: usize) -> Self {
        let fact: Vec<f64> = (0..=2 * p).scan(1.0, |f, k| {
            let v = *f;
            *f *= (k + 1) as f64;
            Some(v)
        }).collect();
        let mut norm = vec![0.0; len(p)];
        for n in 0..=p {
            for m in -(n as isize)..=n as isize {
                let a = m.unsigned_abs();
                norm[idx(n, m)] = (fact[n - a] * fact[n + a]).sqrt();
            }
        }
        Self { p, norm, rot: Rotations::new(p) }
    }

    /// Rotate `b` onto +z, apply the `m`-preserving `coax` on coefficients
    /// in this module's normalization, rotate back and add to `dst`.
    fn rotated(&self, b: &Vec3, inp: &[C64], in_local: bool, out_local: bool, dst: &mut [C64], coax: impl Fn(f64, &[C64], &mut [C64])) {
        let p = self.p;
        let to_ortho = |v: C64, a: f64, local: bool| if local { v / a } else { v * a };
        let from_ortho = |v: C64, a: f64, local: bool| if local { v * a } else { v / a };
        let f = Frame::of(b);
        let c: Vec<C64> = inp.iter().zip(&self.norm).map(|(v, a)| to_ortho(*v, *a, in_local)).collect();
        let mut r = self.rot.forward(&f, &c);
        for (v, a) in r.iter_mut().zip(&self.norm) {
            *v = from_ortho(*v, *a, in_local);
        }
        let mut e = vec![C64::new(0.0, 0.0); len(p)];
        coax(f.rho, &r, &mut e);
        for (v, a) in e.iter_mut().zip(&self.norm) {
            *v = to_ortho(*v, *a, out_local);
        }
        let mut back = vec![C64::new(0.0, 0.0); len(p)];
        self.rot.backward_add(&f, &e, &mut back);
        for ((d, v), a) in dst.iter_mut().zip(&back).zip(&self.norm) {
            *d += from_ortho(*v, *a, out_local);
        }
    }

    pub fn m_to_m(&self, child: &Expansion, parent: &mut Expansion) {
        let b = parent.center - child.center;
        if b == Vec3::zeros() {
            return self.m_to_m_direct(child, parent);
        }
        let p = self.p;
        self.rotated(&b, &child.coeffs, false, false, &mut parent.coeffs, |rho, c, out| {
            let mut reg = Vec::new();
            regular(&Vec3::new(0.0, 0.0, -rho), p, &mut reg);
            for np in 0..=p {
                for m in 0..=np {
                    let mi = m as isize;
                    let mut acc = C64::new(0.0, 0.0);
                    for n in m..=np {
                        acc += c[idx(n, mi)] * reg[idx(np - n, 0)].re;
                    }
                    out[idx(np, mi)] = acc;
                }
            }
        });
    }

    pub fn m_to_l(&self, src: &Expansion, tgt: &mut Expansion) {
        let p = self.p;
        self.rotated(&(tgt.center - src.center), &src.coeffs, false, true, &mut tgt.coeffs, |rho, c, out| {
            let mut irr = Vec::new();
            irregular(&Vec3::new(0.0, 0.0, rho), 2 * p, &mut irr);
            for j in 0..=p {
                for t in 0..=j as isize {
                    let mut acc = C64::new(0.0, 0.0);
                    for n in t as usize..=p {
                        acc += c[idx(n, t)] * irr[idx(n + j, 0)].re;
                    }
                    out[idx(j, t)] = sign(j as isize) * sign(t) * acc;
                }
            }
        });
    }

    pub fn l_to_l(&self, parent: &Expansion, child: &mut Expansion) {
        let b = child.center - parent.center;
        if b == Vec3::zeros() {
            return self.l_to_l_direct(parent, child);
        }
        let p = self.p;
        self.rotated(&b, &parent.coeffs, true, true, &mut child.coeffs, |rho, c, out| {
            let mut reg = Vec::new();
            regular(&Vec3::new(0.0, 0.0, rho), p, &mut reg);
            for k in 0..=p {
                for l in 0..=k {
                    let li = l as isize;
                    let mut acc = C64::new(0.0, 0.0);
                    for n in k..=p {
                        acc += c[idx(n, li)] * reg[idx(n - k, 0)].re;
                    }
                    out[idx(k, li)] = acc;
                }
            }
        });
    }

    pub fn s_to_m(&self, sources: &[SourceDensity], out: &mut Expansion) {
        let p = self.p;
        let mut reg = Vec::new();
        for s in sources {
            regular(&(s.position - out.center), p, &mut reg);
            let q = s.charge * INV_4PI;
            let has_dipole = s.dipole != Vec3::zeros();
            let u = ups1(&(s.dipole * INV_4PI));
            for n in 0..=p {
                for m in 0..=n as isize {
                    let mut c = q * reg[idx(n, m)].conj();
                    if has_dipole && n > 0 {
                        let mut g = C64::new(0.0, 0.0);
                        for l in -1..=1isize {
                            if (m - l).unsigned_abs() < n {
                                g += u[(l + 1) as usize] * reg[idx(n - 1, m - l)];
                            }
                        }
                        c += g.conj();
                    }
                    out.coeffs[idx(n, m)] += c;
                }
            }
        }
        fill_negative(p, &mut out.coeffs);
    }

    pub fn s_to_l(&self, sources: &[SourceDensity], out: &mut Expansion) {
        let p = self.p;
        let mut irr = Vec::new();
        for s in sources {
            irregular(&(s.position - out.center), p + 1, &mut irr);
            let q = s.charge * INV_4PI;
            let has_dipole = s.dipole != Vec3::zeros();
            let u = ups1(&(s.dipole * INV_4PI));
            for n in 0..=p {
                for t in 0..=n as isize {
                    let mut c = q * irr[idx(n, -t)];
                    if has_dipole {
                        // d·∇Θ_{n,-t} = -Σ_l Θ_{n+1,-t+l} conj Υ_1l(d)
                        for l in -1..=1isize {
                            c -= irr[idx(n + 1, -t + l)] * u[(l + 1) as usize].conj();
                        }
                    }
                    out.coeffs[idx(n, t)] += sign(t) * c;
                }
            }
        }
        fill_negative(p, &mut out.coeffs);
    }

    pub(crate) fn m_to_m_direct(&self, child: &Expansion, parent: &mut Expansion) {
        let p = self.p;
        let mut reg = Vec::new();
        regular(&(child.center - parent.center), p, &mut reg);
        for np in 0..=p {
            for mp in 0..=np as isize {
                let mut acc = C64::new(0.0, 0.0);
                for n in 0..=np {
                    let k = np - n;
                    let ki = k as isize;
                    let lo = (-(n as isize)).max(mp - ki);
                    let hi = (n as isize).min(mp + ki);
                    for m in lo..=hi {
                        acc += child.coeffs[idx(n, m)] * reg[idx(k, mp - m)].conj();
                    }
                }
                parent.coeffs[idx(np, mp)] += acc;
            }
        }
        fill_negative(p, &mut parent.coeffs);
    }

    #[cfg(test)]
    pub(crate) fn m_to_l_direct(&self, src: &Expansion, tgt: &mut Expansion) {
        let p = self.p;
        let mut irr = Vec::new();
        irregular(&(tgt.center - src.center), 2 * p, &mut irr);
        for j in 0..=p {
            for t in 0..=j as isize {
                let mut acc = C64::new(0.0, 0.0);
                for n in 0..=p {
                    let ni = n as isize;
                    let base_m = idx(n, 0) as isize;
                    let base_t = idx(n + j, -t) as isize;
                    for m in -ni..=ni {
                        acc += src.coeffs[(base_m + m) as usize] * irr[(base_t + m) as usize];
                    }
                }
                tgt.coeffs[idx(j, t)] += sign(j as isize) * sign(t) * acc;
            }
        }
        fill_negative(p, &mut tgt.coeffs);
    }

    pub(crate) fn l_to_l_direct(&self, parent: &Expansion, child: &mut Expansion) {
        let p = self.p;
        let mut reg = Vec::new();
        regular(&(child.center - parent.center), p, &mut reg);
        for k in 0..=p {
            for l in 0..=k as isize {
                let mut acc = C64::new(0.0, 0.0);
                for n in k..=p {
                    let d = (n - k) as isize;
                    let lo = (-(n as isize)).max(l - d);
                    let hi = (n as isize).min(l + d);
                    for m in lo..=hi {
                        acc += parent.coeffs[idx(n, m)] * reg[idx(n - k, m - l)];
                    }
                }
                child.coeffs[idx(k, l)] += acc;
            }
        }
        fill_negative(p, &mut child.coeffs);
    }

    pub fn l_to_t(&self, local: &Expansion, targets: &mut [TargetAccumulator]) {
        let p = self.p;
        let mut reg = Vec::new();
        for t in targets {
            regular(&(t.position - local.center), p, &mut reg);
            let mut pot = 0.0;
            let mut w = [C64::new(0.0, 0.0); 3];
            let want_grad = t.normal != Vec3::zeros();
            for n in 0..=p {
                let ni = n as isize;
                for m in -ni..=ni {
                    let c = local.coeffs[idx(n, m)];
                    pot += (c * reg[idx(n, m)]).re;
                    if want_grad && n > 0 {
                        for l in -1..=1isize {
                            if (m - l).abs() < ni {
                                w[(l + 1) as usize] += c * reg[idx(n - 1, m - l)];
                            }
                        }
                    }
                }
            }
            t.potential += pot;
            if want_grad {
                let u = ups1(&t.normal);
                t.dn0 += (u[0] * w[0] + u[1] * w[1] + u[2] * w[2]).re;
            }
        }
    }

    pub fn m_to_t(&self, mult: &Expansion, targets: &mut [TargetAccumulator]) {
        let p = self.p;
        let mut irr = Vec::new();
        for t in targets {
            irregular(&(t.position - mult.center), p + 1, &mut irr);
            let mut pot = 0.0;
            let mut w = [C64::new(0.0, 0.0); 3];
            let want_grad = t.normal != Vec3::zeros();
            for n in 0..=p {
                let ni = n as isize;
                for m in -ni..=ni {
                    let c = mult.coeffs[idx(n, m)];
                    pot += (c * irr[idx(n, m)]).re;
                    if want_grad {
                        for l in -1..=1isize {
                            w[(l + 1) as usize] += c * irr[idx(n + 1, m + l)];
                        }
                    }
                }
            }
            t.potential += pot;
            if want_grad {
                let u = ups1(&t.normal);
                t.dn0 -= (u[0].conj() * w[0] + u[1].conj() * w[1] + u[2].conj() * w[2]).re;
            }
        }
    }
}
