//! Interpolation: shape-preserving piecewise cubic (Fritsch-Carlson) for
//! monotone maps, and local 6-point Lagrange interpolation for smooth fields
//! on uniform axes.

use crate::error::{Error, Result};

/// Monotonicity-preserving piecewise-cubic interpolant.
///
/// Exact at the nodes; inside a data interval the value stays within the
/// local sample envelope. Outside the abscissa range evaluation continues
/// linearly with the end slope.
#[derive(Debug, Clone)]
pub struct Pchip {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl Pchip {
    /// Builds the interpolant. Fails if abscissae are not strictly increasing
    /// or fewer than two points are given.
    pub fn new(xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(Error::InvalidParameter(
                "interpolation needs matching sample arrays of length >= 2".into(),
            ));
        }
        for i in 1..xs.len() {
            if !(xs[i] > xs[i - 1]) {
                return Err(Error::NonMonotoneAbscissae { index: i });
            }
        }
        let n = xs.len();
        let h: Vec<f64> = (0..n - 1).map(|i| xs[i + 1] - xs[i]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            if delta[i - 1] * delta[i] > 0.0 {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        d[0] = end_slope(h[0], h.get(1).copied().unwrap_or(h[0]), delta[0], delta.get(1).copied().unwrap_or(delta[0]));
        d[n - 1] = end_slope(
            h[n - 2],
            if n >= 3 { h[n - 3] } else { h[n - 2] },
            delta[n - 2],
            if n >= 3 { delta[n - 3] } else { delta[n - 2] },
        );
        Ok(Self {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            slopes: d,
        })
    }

    fn interval(&self, q: f64) -> usize {
        let n = self.xs.len();
        let k = self.xs.partition_point(|&x| x <= q);
        k.clamp(1, n - 1) - 1
    }

    /// Interpolated value at `q`.
    pub fn eval(&self, q: f64) -> f64 {
        let n = self.xs.len();
        if q <= self.xs[0] {
            return self.ys[0] + self.slopes[0] * (q - self.xs[0]);
        }
        if q >= self.xs[n - 1] {
            return self.ys[n - 1] + self.slopes[n - 1] * (q - self.xs[n - 1]);
        }
        let i = self.interval(q);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (q - self.xs[i]) / h;
        let (h00, h10, h01, h11) = hermite_basis(t);
        h00 * self.ys[i] + h10 * h * self.slopes[i] + h01 * self.ys[i + 1] + h11 * h * self.slopes[i + 1]
    }

    /// Derivative of the interpolant at `q`.
    pub fn eval_derivative(&self, q: f64) -> f64 {
        let n = self.xs.len();
        if q <= self.xs[0] {
            return self.slopes[0];
        }
        if q >= self.xs[n - 1] {
            return self.slopes[n - 1];
        }
        let i = self.interval(q);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (q - self.xs[i]) / h;
        let dh00 = (6.0 * t * t - 6.0 * t) / h;
        let dh10 = 3.0 * t * t - 4.0 * t + 1.0;
        let dh01 = (-6.0 * t * t + 6.0 * t) / h;
        let dh11 = 3.0 * t * t - 2.0 * t;
        dh00 * self.ys[i] + dh10 * self.slopes[i] + dh01 * self.ys[i + 1] + dh11 * self.slopes[i + 1]
    }
}

fn hermite_basis(t: f64) -> (f64, f64, f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    (
        2.0 * t3 - 3.0 * t2 + 1.0,
        t3 - 2.0 * t2 + t,
        -2.0 * t3 + 3.0 * t2,
        t3 - t2,
    )
}

/// Shape-preserving one-sided end slope (Moler's formula with limiting).
fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let mut s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if s * d0 <= 0.0 {
        s = 0.0;
    } else if d0 * d1 < 0.0 && s.abs() > 3.0 * d0.abs() {
        s = 3.0 * d0;
    }
    s
}

/// Monotone interpolation of sampled data at the query points.
///
/// Fails if the abscissae are not strictly increasing.
pub fn interpolate_monotone(xs: &[f64], ys: &[f64], queries: &[f64]) -> Result<Vec<f64>> {
    let p = Pchip::new(xs, ys)?;
    Ok(queries.iter().map(|&q| p.eval(q)).collect())
}

/// Local 6-point Lagrange interpolation on a uniform axis.
///
/// Order-6 accurate for smooth data, exact for polynomials up to degree 5.
/// The stencil window is clamped to the sample range; querying outside the
/// axis extrapolates with the edge window polynomial.
pub fn lagrange6_uniform(x0: f64, dx: f64, values: &[f64], q: f64) -> f64 {
    let n = values.len();
    if n < 6 {
        // Fall back to the full-width Lagrange polynomial.
        return lagrange_window(x0, dx, values, 0, n, q);
    }
    let pos = (q - x0) / dx;
    let base = (pos.floor() as isize - 2).clamp(0, n as isize - 6) as usize;
    lagrange_window(x0, dx, values, base, 6, q)
}

/// Stencil base index and the Lagrange weights of a centered width-point
/// window at `q` on a uniform axis, for reuse across many co-located
/// samples. The window is clamped to the sample range; requires at least
/// `width` samples and an even width.
pub fn lagrange_uniform_weights(
    x0: f64,
    dx: f64,
    n: usize,
    width: usize,
    q: f64,
) -> (usize, Vec<f64>) {
    assert!(width >= 2 && width % 2 == 0 && n >= width);
    let pos = (q - x0) / dx;
    let base = (pos.floor() as isize - (width as isize / 2 - 1))
        .clamp(0, n as isize - width as isize) as usize;
    let mut w = vec![0.0; width];
    for (j, wj) in w.iter_mut().enumerate() {
        let xj = x0 + (base + j) as f64 * dx;
        let mut lj = 1.0;
        for k in 0..width {
            if k != j {
                let xk = x0 + (base + k) as f64 * dx;
                lj *= (q - xk) / (xj - xk);
            }
        }
        *wj = lj;
    }
    (base, w)
}

fn lagrange_window(x0: f64, dx: f64, values: &[f64], base: usize, width: usize, q: f64) -> f64 {
    let mut sum = 0.0;
    for j in 0..width {
        let xj = x0 + (base + j) as f64 * dx;
        let mut lj = 1.0;
        for k in 0..width {
            if k != j {
                let xk = x0 + (base + k) as f64 * dx;
                lj *= (q - xk) / (xj - xk);
            }
        }
        sum += lj * values[base + j];
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_at_nodes_and_identity_map() {
        let xs: Vec<f64> = (0..16).map(|i| i as f64 * 0.5).collect();
        let p = Pchip::new(&xs, &xs).unwrap();
        assert!((p.eval(0.37) - 0.37).abs() < 1e-14);
        for &x in &xs {
            assert_eq!(p.eval(x), x);
        }
    }

    #[test]
    fn linear_data_reproduced() {
        let xs: Vec<f64> = (0..12).map(|i| i as f64 * 0.25).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
        let got = interpolate_monotone(&xs, &ys, &[1.0]).unwrap();
        assert!((got[0] - 2.0).abs() < 1e-13);
    }

    #[test]
    fn cubic_map_accuracy_on_64_nodes() {
        let n = 64;
        let xs: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 / (n - 1) as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * x * x).collect();
        let p = Pchip::new(&xs, &ys).unwrap();
        for i in 0..n - 1 {
            let q = 0.5 * (xs[i] + xs[i + 1]);
            assert!((p.eval(q) - q * q * q).abs() < 1e-4, "at {q}");
        }
    }

    #[test]
    fn rejects_non_monotone_abscissae() {
        let r = Pchip::new(&[0.0, 1.0, 1.0, 2.0], &[0.0, 1.0, 2.0, 3.0]);
        assert!(matches!(r, Err(Error::NonMonotoneAbscissae { index: 2 })));
    }

    #[test]
    fn values_stay_inside_local_envelope() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys = [0.0, 0.1, 0.2, 3.0, 3.05, 3.1, 0.5, 0.4, 0.3, 0.2];
        let p = Pchip::new(&xs, &ys).unwrap();
        for i in 0..9 {
            let lo = ys[i].min(ys[i + 1]);
            let hi = ys[i].max(ys[i + 1]);
            for k in 1..20 {
                let q = xs[i] + k as f64 / 20.0;
                let v = p.eval(q);
                assert!(v >= lo - 1e-12 && v <= hi + 1e-12, "overshoot at {q}: {v}");
            }
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let xs: Vec<f64> = (0..32).map(|i| i as f64 * 0.3).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (0.7 * x).sin()).collect();
        let p = Pchip::new(&xs, &ys).unwrap();
        let q = 4.21;
        let h = 1e-6;
        let fd = (p.eval(q + h) - p.eval(q - h)) / (2.0 * h);
        assert!((p.eval_derivative(q) - fd).abs() < 1e-6);
    }

    #[test]
    fn lagrange6_is_exact_for_degree_five() {
        let poly = |x: f64| 1.0 - x + 0.5 * x.powi(2) + 0.25 * x.powi(3) - 0.1 * x.powi(4) + 0.02 * x.powi(5);
        let values: Vec<f64> = (0..40).map(|i| poly(-2.0 + i as f64 * 0.1)).collect();
        for q in [-1.97, -0.333, 0.01, 1.234, 1.79] {
            let got = lagrange6_uniform(-2.0, 0.1, &values, q);
            assert!((got - poly(q)).abs() < 1e-11, "at {q}");
        }
    }

    #[test]
    fn width_six_weights_agree_with_direct_evaluation() {
        let values: Vec<f64> = (0..30).map(|i| ((i as f64) * 0.37).cos()).collect();
        for q in [-0.4, 0.0, 3.33, 14.2, 29.4] {
            let direct = lagrange6_uniform(0.0, 1.0, &values, q);
            let (base, w) = lagrange_uniform_weights(0.0, 1.0, values.len(), 6, q);
            let via: f64 = w.iter().enumerate().map(|(j, &wj)| wj * values[base + j]).sum();
            assert!((direct - via).abs() < 1e-13, "at {q}");
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn width_eight_weights_are_exact_for_degree_seven() {
        let poly = |x: f64| {
            0.3 + x - 0.2 * x.powi(2) + 0.05 * x.powi(3) - 0.04 * x.powi(5) + 0.01 * x.powi(7)
        };
        let values: Vec<f64> = (0..40).map(|i| poly(i as f64 * 0.1)).collect();
        for q in [0.04, 1.337, 2.5, 3.87] {
            let (base, w) = lagrange_uniform_weights(0.0, 0.1, values.len(), 8, q);
            let via: f64 = w.iter().enumerate().map(|(j, &wj)| wj * values[base + j]).sum();
            assert!((via - poly(q)).abs() < 1e-10, "at {q}");
        }
    }

    #[test]
    fn lagrange6_converges_at_order_six() {
        let f = |x: f64| (1.3 * x).sin();
        let err = |n: usize| {
            let dx = 2.0 / n as f64;
            let values: Vec<f64> = (0..=n).map(|i| f(i as f64 * dx)).collect();
            let mut m = 0.0f64;
            for k in 0..200 {
                let q = 0.005 + 1.99 * k as f64 / 200.0;
                m = m.max((lagrange6_uniform(0.0, dx, &values, q) - f(q)).abs());
            }
            m
        };
        let ratio = err(32) / err(64);
        assert!(ratio > 40.0, "ratio {ratio}");
    }
}
