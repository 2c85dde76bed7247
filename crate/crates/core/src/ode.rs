//! Dormand–Prince 5(4) with step-size control.

use nalgebra::SVector;

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B_STAR: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

#[derive(Clone, Copy, Debug)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-12,
        }
    }
}

/// One explicit step of size `h` from `(t, y)`. Returns the 5th order
/// solution and the embedded error estimate.
pub fn dopri_step<const N: usize, F>(f: &F, t: f64, y: &SVector<f64, N>, h: f64) -> (SVector<f64, N>, SVector<f64, N>)
where
    F: Fn(f64, &SVector<f64, N>) -> SVector<f64, N>,
{
    let mut k = [SVector::<f64, N>::zeros(); 7];
    k[0] = f(t, y);
    for s in 1..7 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s) {
            ys += kj * (h * A[s][j]);
        }
        k[s] = f(t + C[s] * h, &ys);
    }
    let mut y5 = *y;
    let mut err = SVector::<f64, N>::zeros();
    for s in 0..7 {
        y5 += k[s] * (h * B[s]);
        err += k[s] * (h * (B[s] - B_STAR[s]));
    }
    (y5, err)
}

fn error_norm<const N: usize>(err: &SVector<f64, N>, y0: &SVector<f64, N>, y1: &SVector<f64, N>, tol: Tolerances) -> f64 {
    let mut acc = 0.0;
    for i in 0..N {
        let sc = tol.atol + tol.rtol * y0[i].abs().max(y1[i].abs());
        acc += (err[i] / sc).powi(2);
    }
    (acc / N as f64).sqrt()
}

/// Adaptive integrator state; each call to [`Dopri5::advance`] performs one
/// accepted step.
pub struct Dopri5<const N: usize, F> {
    f: F,
    pub t: f64,
    pub y: SVector<f64, N>,
    pub h: f64,
    tol: Tolerances,
    pub h_min: f64,
}

/// Accepted step `[t0, t1]` with its endpoint states.
#[derive(Clone, Copy, Debug)]
pub struct StepRecord<const N: usize> {
    pub t0: f64,
    pub y0: SVector<f64, N>,
    pub t1: f64,
    pub y1: SVector<f64, N>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum OdeError {
    StepTooSmall { t: f64, h: f64 },
}

impl<const N: usize, F> Dopri5<N, F>
where
    F: Fn(f64, &SVector<f64, N>) -> SVector<f64, N>,
{
    pub fn new(f: F, t0: f64, y0: SVector<f64, N>, h0: f64, tol: Tolerances) -> Self {
        Self {
            f,
            t: t0,
            y: y0,
            h: h0,
            tol,
            h_min: h0.abs() * 1e-14,
        }
    }

    pub fn rhs(&self) -> &F {
        &self.f
    }

    /// Takes one accepted step, never longer than `h_max`.
    pub fn advance(&mut self, h_max: f64) -> Result<StepRecord<N>, OdeError> {
        let mut h = self.h.min(h_max);
        loop {
            if h < self.h_min {
                return Err(OdeError::StepTooSmall { t: self.t, h });
            }
            let (y1, err) = dopri_step(&self.f, self.t, &self.y, h);
            let en = error_norm(&err, &self.y, &y1, self.tol);
            let factor = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
            if en <= 1.0 {
                let rec = StepRecord {
                    t0: self.t,
                    y0: self.y,
                    t1: self.t + h,
                    y1,
                };
                self.t += h;
                self.y = y1;
                self.h = h * factor;
                return Ok(rec);
            }
            h *= factor.min(0.9);
        }
    }

    /// State at `t0 + θ·(t1 - t0)` within an accepted step, recomputed by a
    /// fresh single step from its start.
    pub fn restep(&self, rec: &StepRecord<N>, dt: f64) -> SVector<f64, N> {
        dopri_step(&self.f, rec.t0, &rec.y0, dt).0
    }
}

/// Integrates from `t0` to `t1` (either direction) and returns the end state.
pub fn integrate<const N: usize, F>(f: F, t0: f64, y0: SVector<f64, N>, t1: f64, tol: Tolerances) -> Result<SVector<f64, N>, OdeError>
where
    F: Fn(f64, &SVector<f64, N>) -> SVector<f64, N>,
{
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(y0);
    }
    let dir = span.signum();
    // integrate in the reversed time variable when going backwards
    let g = |s: f64, y: &SVector<f64, N>| f(t0 + dir * s, y) * dir;
    let mut ode = Dopri5::new(g, 0.0, y0, span.abs() * 1e-3, tol);
    while ode.t < span.abs() {
        let remaining = span.abs() - ode.t;
        let rec = ode.advance(remaining)?;
        if span.abs() - rec.t1 <= 1e-15 * span.abs() {
            break;
        }
    }
    Ok(ode.y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector2;

    #[test]
    fn exponential_growth() {
        let y = integrate(|_, y: &SVector<f64, 1>| *y, 0.0, SVector::from([1.0]), 2.0, Tolerances::default()).unwrap();
        assert!((y[0] - 2f64.exp()).abs() < 1e-11 * 2f64.exp());
    }

    #[test]
    fn harmonic_oscillator_backwards() {
        let f = |_, y: &Vector2<f64>| Vector2::new(y[1], -y[0]);
        let y = integrate(f, 3.0, Vector2::new(3f64.cos(), -3f64.sin()), 0.0, Tolerances::default()).unwrap();
        assert!((y - Vector2::new(1.0, 0.0)).norm() < 1e-11);
    }
}
