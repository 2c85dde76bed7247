//! Closed-form exponentials of 2×2 matrices and the exact flow of affine
//! vector fields `ẋ = a + G x`.

use crate::{Matrix2, Point, Vector2};

/// `exp(A)` for a real 2×2 matrix via Cayley–Hamilton.
///
/// With `s = tr(A)/2` and `N = A - sI`, `N² = qI` where
/// `q = ((a-d)/2)² + bc`, so `exp(A) = e^s (C(q) I + S(q) N)` with
/// `C = cosh √q`, `S = sinh √q / √q` (trigonometric when `q < 0`).
/// Near-repeated eigenvalues switch to the power series in `q`.
pub fn expm2(a: &Matrix2<f64>) -> Matrix2<f64> {
    let s = 0.5 * (a[(0, 0)] + a[(1, 1)]);
    let half_diff = 0.5 * (a[(0, 0)] - a[(1, 1)]);
    let q = half_diff * half_diff + a[(0, 1)] * a[(1, 0)];
    let scale = a.abs().max();
    let (c, sh) = cosh_sinhc(q, scale);
    let n = Matrix2::new(half_diff, a[(0, 1)], a[(1, 0)], -half_diff);
    (Matrix2::identity() * c + n * sh) * s.exp()
}

/// Eigenstructure branch used by [`expm2`]; exposed for diagnostics and tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Spectrum {
    RealDistinct,
    Complex,
    Repeated,
}

pub fn classify(a: &Matrix2<f64>) -> Spectrum {
    let half_diff = 0.5 * (a[(0, 0)] - a[(1, 1)]);
    let q = half_diff * half_diff + a[(0, 1)] * a[(1, 0)];
    let scale = a.abs().max();
    if q.abs() <= REPEATED_THRESHOLD * scale * scale {
        Spectrum::Repeated
    } else if q > 0.0 {
        Spectrum::RealDistinct
    } else {
        Spectrum::Complex
    }
}

const REPEATED_THRESHOLD: f64 = 1e-12;

fn cosh_sinhc(q: f64, scale: f64) -> (f64, f64) {
    if q.abs() <= REPEATED_THRESHOLD * scale * scale {
        // cosh √q = Σ qⁿ/(2n)!, sinh √q/√q = Σ qⁿ/(2n+1)!
        let mut c = 1.0;
        let mut sh = 1.0;
        let mut term_c = 1.0;
        let mut term_s = 1.0;
        for n in 1..6 {
            let nf = n as f64;
            term_c *= q / ((2.0 * nf - 1.0) * (2.0 * nf));
            term_s *= q / ((2.0 * nf) * (2.0 * nf + 1.0));
            c += term_c;
            sh += term_s;
        }
        (c, sh)
    } else if q > 0.0 {
        let r = q.sqrt();
        (r.cosh(), r.sinh() / r)
    } else {
        let r = (-q).sqrt();
        (r.cos(), r.sin() / r)
    }
}

/// `exp(G t)` together with `Φ(t) = ∫₀ᵗ exp(G s) ds`.
///
/// Scaling, truncated Taylor series, then the doubling identities
/// `Φ(2τ) = (I + E(τ)) Φ(τ)` and `E(2τ) = E(τ)²`. Well conditioned for
/// singular and nearly singular `G`, where `G⁻¹(exp(Gt) - I)` cancels.
pub fn exp_and_integral(g: &Matrix2<f64>, t: f64) -> (Matrix2<f64>, Matrix2<f64>) {
    let m = g * t;
    let norm = m.abs().max();
    let mut squarings = 0u32;
    if norm > 0.25 {
        squarings = (norm / 0.25).log2().ceil() as u32;
    }
    let div = (2.0f64).powi(squarings as i32);
    let ms = m / div;
    let tau = t / div;

    let mut e = Matrix2::identity();
    let mut p = Matrix2::identity();
    let mut power = Matrix2::identity();
    let mut fact_e = 1.0;
    let mut fact_p = 1.0;
    for n in 1..=18 {
        power *= ms;
        fact_e *= n as f64;
        fact_p *= (n + 1) as f64;
        e += power / fact_e;
        p += power / fact_p;
        if power.abs().max() / fact_e < 1e-18 {
            break;
        }
    }
    let mut phi = p * tau;
    for _ in 0..squarings {
        phi += e * phi;
        e *= e;
    }
    (e, phi)
}

/// Affine velocity field `u(x) = a + G (x - center)` on one element.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineField {
    pub a: Vector2<f64>,
    pub g: Matrix2<f64>,
    pub center: Point,
}

impl AffineField {
    pub fn new(a: Vector2<f64>, g: Matrix2<f64>) -> Self {
        Self {
            a,
            g,
            center: Point::zeros(),
        }
    }

    pub fn velocity(&self, x: &Point) -> Vector2<f64> {
        self.a + self.g * (x - self.center)
    }

    /// Exact position after time `t` starting from `x0`:
    /// `x0 + Φ(t) u(x0)`.
    pub fn flow(&self, x0: &Point, t: f64) -> Point {
        let (_, phi) = exp_and_integral(&self.g, t);
        x0 + phi * self.velocity(x0)
    }

    /// Position and velocity after time `t`; velocity is `exp(Gt) u(x0)`.
    pub fn flow_with_velocity(&self, x0: &Point, t: f64) -> (Point, Vector2<f64>) {
        let (e, phi) = exp_and_integral(&self.g, t);
        let u0 = self.velocity(x0);
        (x0 + phi * u0, e * u0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_and_diagonal() {
        assert_eq!(expm2(&Matrix2::zeros()), Matrix2::identity());
        let d = Matrix2::new(0.3, 0.0, 0.0, -1.2);
        let e = expm2(&d);
        assert!((e[(0, 0)] - 0.3f64.exp()).abs() < 1e-15);
        assert!((e[(1, 1)] - (-1.2f64).exp()).abs() < 1e-15);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn rotation_generator() {
        let a = Matrix2::new(0.0, -1.0, 1.0, 0.0);
        assert_eq!(classify(&a), Spectrum::Complex);
        let e = expm2(&(a * 0.7));
        let expected = Matrix2::new(0.7f64.cos(), -0.7f64.sin(), 0.7f64.sin(), 0.7f64.cos());
        assert!((e - expected).abs().max() < 1e-15);
    }

    #[test]
    fn nilpotent_is_repeated_branch() {
        let a = Matrix2::new(0.0, 2.0, 0.0, 0.0);
        assert_eq!(classify(&a), Spectrum::Repeated);
        let e = expm2(&a);
        assert_eq!(e, Matrix2::new(1.0, 2.0, 0.0, 1.0));
    }

    #[test]
    fn flow_of_separable_field() {
        // ẋ = 1 + x  ⇒  x(t) = (1 + x0) eᵗ - 1
        let f = AffineField::new(Vector2::new(1.0, 0.0), Matrix2::new(1.0, 0.0, 0.0, 0.0));
        let x = f.flow(&Point::new(0.0, 0.25), 0.75f64.ln_1p());
        assert!((x.x - 0.75).abs() < 1e-15);
        assert!((x.y - 0.25).abs() < 1e-15);
    }

    #[test]
    fn integral_matches_inverse_formula_when_invertible() {
        let g = Matrix2::new(-0.4, 1.3, 0.2, 0.9);
        let t = 2.5;
        let (e, phi) = exp_and_integral(&g, t);
        let expected = g.try_inverse().unwrap() * (expm2(&(g * t)) - Matrix2::identity());
        assert!((phi - expected).abs().max() < 1e-13);
        assert!((e - expm2(&(g * t))).abs().max() < 1e-13);
    }
}
