//! Yukawa translations.
//!
//! With `ψ_nm(x) = i_n(κ|x|) Y_nm(x̂)` and `φ_nm(x) = k_n(κ|x|) Y_nm(x̂)`,
//! `e^{-κ|x-y|}/(4π|x-y|) = κ Σ conj ψ_nm(y) φ_nm(x)` for `|y| < |x|`.
//! Stored coefficients are scaled by the box scale `s = κ·radius`:
//! multipole `M̂_nm = M_nm / s^n` (field `Σ M_nm φ_nm`), local
//! `L̂_nm = L_nm s^n` (field `Σ L_nm ψ_nm`). Translations go through Gaunt
//! coefficients `𝒢`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, RwLock};

use num_complex::Complex64 as C64;

use super::bessel::{i_over_power, k_times_power};
use super::gaunt::Gaunt;
use super::harmonics::{fill_negative, idx, len, sign, surface};
use super::rotation::{quantize, Coaxial, Frame, Rotations};
use super::{dipole_harmonics, Expansion, SourceDensity, TargetAccumulator};
use crate::Vec3;

/// One term of a translation: `out += coef × scalings × Z[z] × in`.
#[derive(Clone, Copy)]
struct Term {
    out: u32,
    inp: u32,
    z: u32,
    n_in: u8,
    n_out: u8,
    lam: u8,
    coef: f64,
}

/// Gradient term: `d·∇` of basis function `(n, m)` contains
/// `coef × dip[μ+1] × basis(n', m')`.
#[derive(Clone, Copy)]
struct GradTerm {
    from: u32,
    to: u32,
    mu: i8,
    n_from: u8,
    n_to: u8,
    coef: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Op {
    M2M,
    M2L,
    L2L,
}

struct Weights {
    op: Op,
    z: Vec<C64>,
    a_in: Vec<f64>,
    a_out: Vec<f64>,
    lam: Vec<f64>,
    pw: Vec<f64>,
}

impl Weights {
    #[inline]
    fn of(&self, t: &Term) -> f64 {
        let (ni, no, l) = (t.n_in as isize, t.n_out as isize, t.lam as isize);
        let e = match self.op {
            Op::M2M => ni + l - no,
            Op::M2L => ni + no - l - 1,
            Op::L2L => no + l - ni,
        };
        t.coef * self.a_in[t.n_in as usize] * self.a_out[t.n_out as usize] * self.lam[t.lam as usize] * self.pw[(e + 1) as usize]
    }
}

pub struct Yukawa {
    p: usize,
    kappa: f64,
    m2m: Vec<Term>,
    m2l: Vec<Term>,
    l2l: Vec<Term>,
    /// Terms with `μ = 0`, the only ones left when `b ∥ z`.
    m2m_coax: Vec<Term>,
    m2l_coax: Vec<Term>,
    l2l_coax: Vec<Term>,
    rot: Rotations,
    coax_cache: RwLock<HashMap<(u8, u64, u64, u64), Arc<Coaxial>>>,
    /// `d·∇ψ_nm = Σ coef dip_μ ψ_{n'm'}` with `μ = m - m'`.
    grad_regular: Vec<GradTerm>,
    /// `d·∇φ_nm = Σ coef conj(dip_μ) φ_{n'm'}` with `μ = m' - m`.
    grad_irregular: Vec<GradTerm>,
}

fn lambda_range(n1: usize, n2: usize, mu: isize) -> impl Iterator<Item = usize> {
    let lo = n1.abs_diff(n2).max(mu.unsigned_abs());
    (lo..=n1 + n2).filter(move |l| (n1 + n2 + l).is_multiple_of(2))
}

impl Yukawa {
    pub fn new(p: usize, kappa: f64) -> Self {
        let g = Gaunt::new(2 * p + 1);
        let four_pi = 4.0 * PI;
        let (mut m2m, mut m2l, mut l2l) = (vec![], vec![], vec![]);
        for no in 0..=p {
            for mo in 0..=no as isize {
                for ni in 0..=p {
                    for mi in -(ni as isize)..=ni as isize {
                        let term = |lam: usize, mu: isize, coef: f64| Term {
                            out: idx(no, mo) as u32,
                            inp: idx(ni, mi) as u32,
                            z: idx(lam, mu) as u32,
                            n_in: ni as u8,
                            n_out: no as u8,
                            lam: lam as u8,
                            coef,
                        };
                        // M2M: φ_nm(X+b) = 4π Σ 𝒢(n',m'; n,m; λ,μ) conj ψ_λμ(-b) φ_n'm'(X), μ = m'-m
                        let mu = mo - mi;
                        for lam in lambda_range(no, ni, mu) {
                            let c = four_pi * g.get(no, mo, ni, mi, lam, mu);
                            if c != 0.0 {
                                m2m.push(term(lam, mu, c));
                            }
                        }
                        // L2L: ψ_nm(X+b) = 4π Σ 𝒢(n,m; n',m'; λ,μ) ψ_n'm'(X) ψ_λμ(b), μ = m-m'
                        let mu = mi - mo;
                        for lam in lambda_range(no, ni, mu) {
                            let c = four_pi * g.get(ni, mi, no, mo, lam, mu);
                            if c != 0.0 {
                                l2l.push(term(lam, mu, c));
                            }
                        }
                        // M2L: L_n't = 4π (-1)^n' σ_t Σ M_nm Σ_λ 𝒢(λ,m-t; n,m; n',-t) φ_{λ,m-t}(b)
                        let mu = mi - mo;
                        for lam in lambda_range(no, ni, mu) {
                            let c = four_pi * sign(no as isize) * sign(mo) * g.get(lam, mu, ni, mi, no, -mo);
                            if c != 0.0 {
                                m2l.push(term(lam, mu, c));
                            }
                        }
                    }
                }
            }
        }
        // |d| Y_1μ(d̂) = sqrt(3/(4π)) dip_μ
        let grad_scale = 4.0 * PI * kappa / 3.0 * (3.0 / (4.0 * PI)).sqrt();
        let (mut grad_regular, mut grad_irregular) = (vec![], vec![]);
        for n in 0..=p + 1 {
            for m in -(n as isize)..=n as isize {
                for n2 in [n.wrapping_sub(1), n + 1] {
                    if n2 > p + 2 {
                        continue;
                    }
                    for mu in -1..=1isize {
                        let gt = |m2: isize, coef: f64| GradTerm {
                            from: idx(n, m) as u32,
                            to: idx(n2, m2) as u32,
                            mu: mu as i8,
                            n_from: n as u8,
                            n_to: n2 as u8,
                            coef,
                        };
                        let m2 = m - mu;
                        if m2.unsigned_abs() <= n2 {
                            let c = grad_scale * g.get(n, m, n2, m2, 1, mu);
                            if c != 0.0 {
                                grad_regular.push(gt(m2, c));
                            }
                        }
                        let m2 = m + mu;
                        if m2.unsigned_abs() <= n2 {
                            let c = -grad_scale * g.get(n2, m2, n, m, 1, mu);
                            if c != 0.0 {
                                grad_irregular.push(gt(m2, c));
                            }
                        }
                    }
                }
            }
        }
        let coax = |v: &[Term]| v.iter().filter(|t| t.z as usize == idx(t.lam as usize, 0)).copied().collect();
        Self {
            p,
            kappa,
            m2m_coax: coax(&m2m),
            m2l_coax: coax(&m2l),
            l2l_coax: coax(&l2l),
            m2m,
            m2l,
            l2l,
            rot: Rotations::new(p),
            coax_cache: RwLock::new(HashMap::new()),
            grad_regular,
            grad_irregular,
        }
    }

    /// `ψ_nm(x) / s^n` for `n ≤ order`.
    fn regular_scaled(&self, x: &Vec3, s: f64, order: usize, out: &mut Vec<C64>, bes: &mut Vec<f64>) {
        let rho = self.kappa * x.norm();
        surface(x, order, out);
        i_over_power(rho, order, bes);
        let ratio = rho / s;
        let mut pw = 1.0;
        for n in 0..=order {
            let f = pw * bes[n];
            for m in -(n as isize)..=n as isize {
                out[idx(n, m)] *= f;
            }
            pw *= ratio;
        }
    }

    /// `s^n φ_nm(x)` for `n ≤ order`.
    fn irregular_scaled(&self, x: &Vec3, s: f64, order: usize, out: &mut Vec<C64>, bes: &mut Vec<f64>) {
        let rho = self.kappa * x.norm();
        surface(x, order, out);
        k_times_power(rho, order, bes);
        let ratio = s / rho;
        let mut pw = 1.0 / rho;
        for n in 0..=order {
            let f = pw * bes[n];
            for m in -(n as isize)..=n as isize {
                out[idx(n, m)] *= f;
            }
            pw *= ratio;
        }
    }

    pub fn s_to_m(&self, sources: &[SourceDensity], out: &mut Expansion) {
        let p = self.p;
        let s = out.scale;
        let (mut r, mut bes) = (Vec::new(), Vec::new());
        let mut acc = vec![C64::new(0.0, 0.0); len(p)];
        for src in sources {
            self.regular_scaled(&(src.position - out.center), s, p + 1, &mut r, &mut bes);
            for n in 0..=p {
                for m in 0..=n as isize {
                    acc[idx(n, m)] += src.charge * r[idx(n, m)].conj();
                }
            }
            if src.dipole != Vec3::zeros() {
                // conj(d·∇ψ_nm) / s^n with ψ_n'/s^n = s^{n'-n} r_n'
                let dip = dipole_harmonics(&src.dipole);
                for t in &self.grad_regular {
                    let (n, nt) = (t.n_from as usize, t.n_to as usize);
                    if n > p || nt > p + 1 {
                        continue;
                    }
                    let from = t.from as usize;
                    if from < idx(n, 0) {
                        continue;
                    }
                    let f = if nt > n { s } else { 1.0 / s };
                    acc[from] += (t.coef * f * dip[(t.mu + 1) as usize] * r[t.to as usize]).conj();
                }
            }
        }
        for (c, a) in out.coeffs.iter_mut().zip(&acc) {
            *c += self.kappa * a;
        }
        fill_negative(p, &mut out.coeffs);
    }

    pub fn s_to_l(&self, sources: &[SourceDensity], out: &mut Expansion) {
        let p = self.p;
        let s = out.scale;
        let (mut r, mut bes) = (Vec::new(), Vec::new());
        let mut acc = vec![C64::new(0.0, 0.0); len(p)];
        for src in sources {
            self.irregular_scaled(&(src.position - out.center), s, p + 1, &mut r, &mut bes);
            for n in 0..=p {
                for t in 0..=n as isize {
                    acc[idx(n, t)] += sign(t) * src.charge * r[idx(n, -t)];
                }
            }
            if src.dipole != Vec3::zeros() {
                // s^n d·∇φ_{n,-t}, with s^n φ_n' = s^{n-n'} r_n'
                let dip = dipole_harmonics(&src.dipole);
                for g in &self.grad_irregular {
                    let (n, nt) = (g.n_from as usize, g.n_to as usize);
                    if n > p || nt > p + 1 {
                        continue;
                    }
                    let from = g.from as usize;
                    let m = from as isize - idx(n, 0) as isize;
                    if m > 0 {
                        continue;
                    }
                    let f = if nt > n { 1.0 / s } else { s };
                    acc[idx(n, -m)] += sign(m) * g.coef * f * dip[(g.mu + 1) as usize].conj() * r[g.to as usize];
                }
            }
        }
        for (c, a) in out.coeffs.iter_mut().zip(&acc) {
            *c += self.kappa * a;
        }
        fill_negative(p, &mut out.coeffs);
    }

    fn terms(&self, op: Op) -> (&[Term], &[Term]) {
        match op {
            Op::M2M => (&self.m2m, &self.m2m_coax),
            Op::M2L => (&self.m2l, &self.m2l_coax),
            Op::L2L => (&self.l2l, &self.l2l_coax),
        }
    }

    /// Per-term scalings of a translation by `b` (destination minus source
    /// centre) between boxes of scales `s_in` and `s_out`.
    fn weights(&self, op: Op, b: &Vec3, s_in: f64, s_out: f64) -> Weights {
        let p = self.p;
        let r = self.kappa * b.norm();
        let mut z = Vec::new();
        let mut bes = Vec::new();
        match op {
            Op::M2M => {
                // conj ψ_λμ(-b)
                surface(&-b, 2 * p, &mut z);
                z.iter_mut().for_each(|v| *v = v.conj());
                i_over_power(r, 2 * p, &mut bes);
                let lam = powers(r / s_out, 2 * p).iter().zip(&bes).map(|(a, b)| a * b).collect();
                // s_out^{n - n' + λ}
                Weights { op, z, a_in: powers(s_in / s_out, p), a_out: vec![1.0; p + 1], lam, pw: shifted_powers(s_out, 2 * p) }
            }
            Op::M2L => {
                surface(b, 2 * p, &mut z);
                k_times_power(r, 2 * p, &mut bes);
                // σ^{n + n' - λ - 1}
                Weights { op, z, a_in: powers(s_in / r, p), a_out: powers(s_out / r, p), lam: bes, pw: shifted_powers(r, 2 * p) }
            }
            Op::L2L => {
                surface(b, 2 * p, &mut z);
                i_over_power(r, 2 * p, &mut bes);
                let lam = powers(r / s_in, 2 * p).iter().zip(&bes).map(|(a, b)| a * b).collect();
                // s_in^{n' - n + λ}
                Weights { op, z, a_in: vec![1.0; p + 1], a_out: powers(s_out / s_in, p), lam, pw: shifted_powers(s_in, 2 * p) }
            }
        }
    }

    /// General translation through every Gaunt term, `O(p⁵)`; the reference
    /// for the rotated path.
    pub(crate) fn translate_direct(&self, op: Op, b: &Vec3, s_in: f64, s_out: f64, inp: &[C64], dst: &mut [C64]) {
        let w = self.weights(op, b, s_in, s_out);
        let mut out = vec![C64::new(0.0, 0.0); len(self.p)];
        for t in self.terms(op).0 {
            out[t.out as usize] += w.of(t) * w.z[t.z as usize] * inp[t.inp as usize];
        }
        add_filled(self.p, out, dst);
    }

    fn coaxial(&self, op: Op, rho: f64, s_in: f64, s_out: f64) -> Arc<Coaxial> {
        let (s_in, s_out) = (quantize(s_in), quantize(s_out));
        let key = (op as u8, rho.to_bits(), s_in.to_bits(), s_out.to_bits());
        if let Some(c) = self.coax_cache.read().expect("coaxial cache").get(&key) {
            return c.clone();
        }
        let w = self.weights(op, &Vec3::new(0.0, 0.0, rho), s_in, s_out);
        let mut c = Coaxial::zeros(self.p);
        for t in self.terms(op).1 {
            let m = idx_order(t.out as usize, t.n_out as usize);
            *c.at(m, t.n_out as usize, t.n_in as usize) += w.of(t) * w.z[t.z as usize].re;
        }
        let c = Arc::new(c);
        self.coax_cache.write().expect("coaxial cache").entry(key).or_insert(c).clone()
    }

    /// Rotate `b` onto +z, translate coaxially and rotate back, `O(p³)`.
    fn translate(&self, op: Op, b: &Vec3, s_in: f64, s_out: f64, inp: &[C64], dst: &mut [C64]) {
        if *b == Vec3::zeros() {
            return self.translate_direct(op, b, s_in, s_out, inp, dst);
        }
        let f = Frame::of(b);
        let coax = self.coaxial(op, f.rho, s_in, s_out);
        let r = self.rot.forward(&f, inp);
        let mut e = vec![C64::new(0.0, 0.0); len(self.p)];
        coax.apply(&r, &mut e);
        let mut back = vec![C64::new(0.0, 0.0); len(self.p)];
        self.rot.backward_add(&f, &e, &mut back);
        for (d, v) in dst.iter_mut().zip(&back) {
            *d += v;
        }
    }

    pub fn m_to_m(&self, child: &Expansion, parent: &mut Expansion) {
        self.translate(Op::M2M, &(parent.center - child.center), child.scale, parent.scale, &child.coeffs, &mut parent.coeffs);
    }

    pub fn m_to_l(&self, src: &Expansion, tgt: &mut Expansion) {
        self.translate(Op::M2L, &(tgt.center - src.center), src.scale, tgt.scale, &src.coeffs, &mut tgt.coeffs);
    }

    pub fn l_to_l(&self, parent: &Expansion, child: &mut Expansion) {
        self.translate(Op::L2L, &(child.center - parent.center), parent.scale, child.scale, &parent.coeffs, &mut child.coeffs);
    }

    pub fn l_to_t(&self, local: &Expansion, targets: &mut [TargetAccumulator]) {
        let p = self.p;
        let s = local.scale;
        let (mut r, mut bes) = (Vec::new(), Vec::new());
        for t in targets {
            let want_grad = t.normal != Vec3::zeros();
            let order = if want_grad { p + 1 } else { p };
            self.regular_scaled(&(t.position - local.center), s, order, &mut r, &mut bes);
            let mut pot = 0.0;
            for i in 0..len(p) {
                pot += (local.coeffs[i] * r[i]).re;
            }
            t.potential += pot;
            if want_grad {
                let dip = dipole_harmonics(&t.normal);
                let mut g = C64::new(0.0, 0.0);
                for gt in &self.grad_regular {
                    let (n, nt) = (gt.n_from as usize, gt.n_to as usize);
                    if n > p || nt > p + 1 {
                        continue;
                    }
                    let f = if nt > n { s } else { 1.0 / s };
                    g += local.coeffs[gt.from as usize] * (gt.coef * f) * dip[(gt.mu + 1) as usize] * r[gt.to as usize];
                }
                t.dn0 += g.re;
            }
        }
    }

    pub fn m_to_t(&self, mult: &Expansion, targets: &mut [TargetAccumulator]) {
        let p = self.p;
        let s = mult.scale;
        let (mut r, mut bes) = (Vec::new(), Vec::new());
        for t in targets {
            let want_grad = t.normal != Vec3::zeros();
            let order = if want_grad { p + 1 } else { p };
            self.irregular_scaled(&(t.position - mult.center), s, order, &mut r, &mut bes);
            let mut pot = 0.0;
            for i in 0..len(p) {
                pot += (mult.coeffs[i] * r[i]).re;
            }
            t.potential += pot;
            if want_grad {
                let dip = dipole_harmonics(&t.normal);
                let mut g = C64::new(0.0, 0.0);
                for gt in &self.grad_irregular {
                    let (n, nt) = (gt.n_from as usize, gt.n_to as usize);
                    if n > p || nt > p + 1 {
                        continue;
                    }
                    // s^n φ_n' = s^{n-n'} (s^n' φ_n')
                    let f = if nt > n { 1.0 / s } else { s };
                    g += mult.coeffs[gt.from as usize] * (gt.coef * f) * dip[(gt.mu + 1) as usize].conj() * r[gt.to as usize];
                }
                t.dn0 += g.re;
            }
        }
    }
}

/// `[1/x, 1, x, …, x^n]`: index `e + 1` holds `x^e`.
fn shifted_powers(x: f64, n: usize) -> Vec<f64> {
    let mut v = vec![1.0 / x];
    v.extend(powers(x, n));
    v
}

/// `m` of the `m ≥ 0` slot `i` at degree `n`.
fn idx_order(i: usize, n: usize) -> usize {
    i - n * n - n
}

fn powers(x: f64, n: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(n + 1);
    let mut a = 1.0;
    for _ in 0..=n {
        v.push(a);
        a *= x;
    }
    v
}

/// Add `m ≥ 0` results into `dst` and refresh its `m < 0` half.
fn add_filled(p: usize, src: Vec<C64>, dst: &mut [C64]) {
    for n in 0..=p {
        for m in 0..=n as isize {
            dst[idx(n, m)] += src[idx(n, m)];
        }
    }
    fill_negative(p, dst);
}
