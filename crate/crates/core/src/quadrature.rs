//! Quadrature rules on flat triangles.

use std::f64::consts::PI;

use crate::Vec3;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// A quadrature point with its weight (area units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: Vec3,
    pub w: f64,
}

fn area(c: &[Vec3; 3]) -> f64 {
    0.5 * (c[1] - c[0]).cross(&(c[2] - c[0])).norm()
}

/// Symmetric 3-point rule, exact for quadratics.
pub fn triangle3(c: &[Vec3; 3], out: &mut Vec<Point>) {
    let w = area(c) / 3.0;
    for k in 0..3 {
        let x = (2.0 / 3.0) * c[k] + (1.0 / 6.0) * (c[(k + 1) % 3] + c[(k + 2) % 3]);
        out.push(Point { x, w });
    }
}

/// Recursively split `c` into four while the piece is closer to `focus`
/// than `ratio` times its diameter, up to `depth` levels, then apply the
/// 3-point rule to every piece.
pub fn graded(c: &[Vec3; 3], focus: &Vec3, ratio: f64, depth: u32, out: &mut Vec<Point>) {
    let centroid = (c[0] + c[1] + c[2]) / 3.0;
    let diam = (c[0] - c[1]).norm().max((c[1] - c[2]).norm()).max((c[2] - c[0]).norm());
    if depth == 0 || (centroid - focus).norm() >= ratio * diam {
        triangle3(c, out);
        return;
    }
    let m01 = 0.5 * (c[0] + c[1]);
    let m12 = 0.5 * (c[1] + c[2]);
    let m20 = 0.5 * (c[2] + c[0]);
    for piece in [[c[0], m01, m20], [m01, c[1], m12], [m20, m12, c[2]], [m01, m12, m20]] {
        graded(&piece, focus, ratio, depth - 1, out);
    }
}

/// Product Gauss rule through the Duffy map collapsing an edge onto
/// `c[0]`. The Jacobian vanishes linearly at `c[0]`, which cancels a `1/r`
/// singularity there.
pub fn duffy(c: &[Vec3; 3], gl: &(Vec<f64>, Vec<f64>), out: &mut Vec<Point>) {
    let two_area = 2.0 * area(c);
    let (x, w) = gl;
    for (&u, &wu) in x.iter().zip(w) {
        let s = 0.5 * (u + 1.0);
        for (&v, &wv) in x.iter().zip(w) {
            let t = 0.5 * (v + 1.0);
            // (s, t) in the unit square -> barycentric (1-s, s(1-t), s t)
            let p = (1.0 - s) * c[0] + s * (1.0 - t) * c[1] + s * t * c[2];
            out.push(Point {
                x: p,
                w: 0.25 * wu * wv * s * two_area,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in 1..20 {
            let (x, w) = gauss_legendre(n);
            for deg in 0..2 * n {
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg + 1) as f64 };
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg} {q} {exact}");
            }
        }
    }

    fn tri() -> [Vec3; 3] {
        [Vec3::new(0.1, 0.2, 0.0), Vec3::new(1.3, 0.1, 0.4), Vec3::new(0.2, 1.1, -0.3)]
    }

    fn integrate(points: &[Point], f: impl Fn(&Vec3) -> f64) -> f64 {
        points.iter().map(|p| p.w * f(&p.x)).sum()
    }

    #[test]
    fn rules_are_exact_for_quadratics() {
        let c = tri();
        let f = |x: &Vec3| 1.0 + x.x - 2.0 * x.y * x.z + x.x * x.x;
        let mut a = vec![];
        triangle3(&c, &mut a);
        let mut b = vec![];
        graded(&c, &c[1], 2.0, 3, &mut b);
        let mut d = vec![];
        duffy(&c, &gauss_legendre(6), &mut d);
        assert_relative_eq!(integrate(&a, f), integrate(&b, f), max_relative = 1e-13);
        assert_relative_eq!(integrate(&a, f), integrate(&d, f), max_relative = 1e-13);
    }

    #[test]
    fn duffy_handles_inverse_distance() {
        // ∫ 1/r over the unit right triangle, seen from the right-angle corner:
        // ∫_0^{π/2} dθ / (cos θ + sin θ) = √2·ln(1+√2)
        let c = [Vec3::zeros(), Vec3::x(), Vec3::y()];
        let mut d = vec![];
        duffy(&c, &gauss_legendre(12), &mut d);
        let q = integrate(&d, |x| 1.0 / x.norm());
        assert_relative_eq!(q, 2f64.sqrt() * (1.0 + 2f64.sqrt()).ln(), max_relative = 1e-9);
    }
}
