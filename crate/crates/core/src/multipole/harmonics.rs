//! Solid and surface spherical harmonics, Condon-Shortley phase throughout.
//!
//! Arrays hold every `(n, m)` with `|m| ≤ n ≤ order` at [`idx`]`(n, m)`.
//! Negative orders follow `X_{n,-m} = (-1)^m conj(X_{n,m})`.

use num_complex::Complex64 as C64;

use crate::Vec3;

#[inline]
pub fn idx(n: usize, m: isize) -> usize {
    ((n * n + n) as isize + m) as usize
}

#[inline]
pub fn len(order: usize) -> usize {
    (order + 1) * (order + 1)
}

#[inline]
pub fn sign(m: isize) -> f64 {
    if m & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Fill `m < 0` entries from `m > 0` ones.
#[inline]
pub fn fill_negative(order: usize, a: &mut [C64]) {
    for n in 1..=order {
        for m in 1..=n as isize {
            a[idx(n, -m)] = sign(m) * a[idx(n, m)].conj();
        }
    }
}

/// Regular solid harmonics `Υ_nm(x) = r^n P_n^m(cos θ) e^{imφ} / (n+m)!`.
pub fn regular(x: &Vec3, order: usize, out: &mut Vec<C64>) {
    out.clear();
    out.resize(len(order), C64::new(0.0, 0.0));
    let w = C64::new(x.x, x.y);
    let (z, r2) = (x.z, x.norm_squared());
    out[0] = C64::new(1.0, 0.0);
    for m in 0..=order {
        let mi = m as isize;
        if m > 0 {
            out[idx(m, mi)] = -w / (2.0 * m as f64) * out[idx(m - 1, mi - 1)];
        }
        if m < order {
            out[idx(m + 1, mi)] = z * out[idx(m, mi)];
        }
        for n in m + 2..=order {
            let a = (2 * n - 1) as f64 * z * out[idx(n - 1, mi)] - r2 * out[idx(n - 2, mi)];
            out[idx(n, mi)] = a / ((n - m) * (n + m)) as f64;
        }
    }
    fill_negative(order, out);
}

/// Irregular solid harmonics `Θ_nm(x) = (n-m)! P_n^m(cos θ) e^{imφ} / r^{n+1}`.
pub fn irregular(x: &Vec3, order: usize, out: &mut Vec<C64>) {
    out.clear();
    out.resize(len(order), C64::new(0.0, 0.0));
    let r2 = x.norm_squared();
    let inv = 1.0 / r2;
    let w = C64::new(x.x, x.y) * inv;
    let z = x.z * inv;
    out[0] = C64::new(1.0 / r2.sqrt(), 0.0);
    for m in 0..=order {
        let mi = m as isize;
        if m > 0 {
            out[idx(m, mi)] = -((2 * m - 1) as f64) * w * out[idx(m - 1, mi - 1)];
        }
        if m < order {
            out[idx(m + 1, mi)] = (2 * m + 1) as f64 * z * out[idx(m, mi)];
        }
        for n in m + 2..=order {
            out[idx(n, mi)] = (2 * n - 1) as f64 * z * out[idx(n - 1, mi)]
                - ((n + m - 1) * (n - m - 1)) as f64 * inv * out[idx(n - 2, mi)];
        }
    }
    fill_negative(order, out);
}

/// Orthonormal surface harmonics `Y_nm` of the direction of `x`
/// (the +z axis when `x = 0`).
pub fn surface(x: &Vec3, order: usize, out: &mut Vec<C64>) {
    out.clear();
    out.resize(len(order), C64::new(0.0, 0.0));
    let r = x.norm();
    let u = if r > 0.0 { x / r } else { Vec3::z() };
    let w = C64::new(u.x, u.y);
    let z = u.z;
    out[0] = C64::new(0.5 / std::f64::consts::PI.sqrt(), 0.0);
    for m in 0..=order {
        let mi = m as isize;
        let mf = m as f64;
        if m > 0 {
            out[idx(m, mi)] = -((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * w * out[idx(m - 1, mi - 1)];
        }
        if m < order {
            out[idx(m + 1, mi)] = (2.0 * mf + 3.0).sqrt() * z * out[idx(m, mi)];
        }
        for n in m + 2..=order {
            let nf = n as f64;
            let a = ((4.0 * nf * nf - 1.0) / (nf * nf - mf * mf)).sqrt();
            let b = (((nf - 1.0) * (nf - 1.0) - mf * mf) / (4.0 * (nf - 1.0) * (nf - 1.0) - 1.0)).sqrt();
            out[idx(n, mi)] = a * (z * out[idx(n - 1, mi)] - b * out[idx(n - 2, mi)]);
        }
    }
    fill_negative(order, out);
}

/// Normalized associated Legendre functions `T_lm(x)`, `m ≥ 0`, such that
/// `Y_lm(θ, φ) = T_lm(cos θ) e^{imφ}`. Stored at `l(l+1)/2 + m`.
pub fn legendre_table(x: f64, order: usize) -> Vec<f64> {
    let s = (1.0 - x * x).max(0.0).sqrt();
    let at = |l: usize, m: usize| l * (l + 1) / 2 + m;
    let mut t = vec![0.0; (order + 1) * (order + 2) / 2];
    t[0] = 0.5 / std::f64::consts::PI.sqrt();
    for m in 0..=order {
        let mf = m as f64;
        if m > 0 {
            t[at(m, m)] = -((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s * t[at(m - 1, m - 1)];
        }
        if m < order {
            t[at(m + 1, m)] = (2.0 * mf + 3.0).sqrt() * x * t[at(m, m)];
        }
        for l in m + 2..=order {
            let lf = l as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
            t[at(l, m)] = a * (x * t[at(l - 1, m)] - b * t[at(l - 2, m)]);
        }
    }
    t
}
