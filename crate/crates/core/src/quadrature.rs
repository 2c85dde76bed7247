//! Gauss–Legendre rules on intervals and collapsed (Duffy) rules on triangles.

use std::f64::consts::PI;

use crate::Point;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
///
/// Newton iteration on the Legendre recurrence, started from the usual
/// Chebyshev-like guesses. Accurate to rounding for the small `n` used here.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss–Legendre rule needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Value and derivative of the Legendre polynomial `P_n` at `x`.
pub fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = if (1.0 - x * x).abs() < 1e-300 {
        0.5 * nf * (nf + 1.0) * x.powi(n as i32 + 1)
    } else {
        nf * (x * p1 - p0) / (x * x - 1.0)
    };
    (p1, d)
}

/// Legendre polynomial values `P_0..=P_deg` at `s ∈ [-1, 1]`.
pub fn legendre_values(deg: usize, s: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(deg + 1);
    out.push(1.0);
    if deg >= 1 {
        out.push(s);
    }
    for k in 2..=deg {
        let kf = k as f64;
        let v = ((2.0 * kf - 1.0) * s * out[k - 1] - (kf - 1.0) * out[k - 2]) / kf;
        out.push(v);
    }
    out
}

/// Gauss rule on `[0, 1]` with `n` points.
#[derive(Clone, Debug)]
pub struct LineRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl LineRule {
    pub fn new(n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        Self {
            points: x.iter().map(|&t| 0.5 * (t + 1.0)).collect(),
            weights: w.iter().map(|&v| 0.5 * v).collect(),
        }
    }

    /// Smallest rule integrating polynomials of degree `deg` exactly.
    pub fn with_degree(deg: usize) -> Self {
        Self::new(deg / 2 + 1)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Quadrature on the reference triangle `(0,0), (1,0), (0,1)`; weights sum to 1/2.
#[derive(Clone, Debug)]
pub struct TriangleRule {
    /// Barycentric-free reference coordinates `(ξ, η)`.
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    /// Collapsed tensor Gauss rule, exact for polynomials of total degree `deg`.
    pub fn with_degree(deg: usize) -> Self {
        // The Duffy map adds one power of the collapsed coordinate.
        let n = (deg + 2) / 2 + 1;
        let line = LineRule::new(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (i, &s) in line.points.iter().enumerate() {
            for (j, &r) in line.points.iter().enumerate() {
                points.push([r * (1.0 - s), s]);
                weights.push(line.weights[i] * line.weights[j] * (1.0 - s));
            }
        }
        Self { points, weights }
    }

    /// Maps the rule onto a physical triangle; returns points and weights
    /// scaled by the element area.
    pub fn on_triangle(&self, v: &[Point; 3]) -> Vec<(Point, f64)> {
        let e1 = v[1] - v[0];
        let e2 = v[2] - v[0];
        let jac = (e1.x * e2.y - e1.y * e2.x).abs();
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, &w)| (v[0] + e1 * p[0] + e2 * p[1], w * jac))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_monomials() {
        for n in 1..=8 {
            let (x, w) = gauss_legendre(n);
            for p in 0..(2 * n) {
                let num: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p as i32)).sum();
                let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
                assert!((num - exact).abs() < 1e-14, "n={n} p={p}: {num} vs {exact}");
            }
        }
    }

    #[test]
    fn triangle_rule_exact_for_target_degree() {
        // ∫_T x^a y^b = a! b! / (a+b+2)!
        fn fact(n: u32) -> f64 {
            (1..=n).map(f64::from).product()
        }
        for deg in 0..=8 {
            let rule = TriangleRule::with_degree(deg);
            for a in 0..=deg {
                for b in 0..=(deg - a) {
                    let num: f64 = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                        .sum();
                    let exact = fact(a as u32) * fact(b as u32) / fact((a + b + 2) as u32);
                    assert!((num - exact).abs() < 1e-15, "deg {deg}: x^{a} y^{b}");
                }
            }
        }
    }

    #[test]
    fn legendre_values_match_closed_forms() {
        let s = 0.3;
        let v = legendre_values(3, s);
        assert_eq!(v[0], 1.0);
        assert_eq!(v[1], s);
        assert!((v[2] - 0.5 * (3.0 * s * s - 1.0)).abs() < 1e-15);
        assert!((v[3] - 0.5 * (5.0 * s.powi(3) - 3.0 * s)).abs() < 1e-15);
    }
}
