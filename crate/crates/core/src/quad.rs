//! Small numerical helpers shared across modules: Gauss–Legendre rules,
//! complex `exprel`-type functions and simple least squares.

use num_complex::Complex64;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for k in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * k + 1) as f64 * z * p1 - k as f64 * p2) / (k + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
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

/// Integrate `f` over `[a, b]` with an `n`-point Gauss–Legendre rule
/// composed over `panels` equal sub-intervals.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize, panels: usize) -> f64 {
    let (x, w) = gauss_legendre(n);
    let step = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * step;
        let half = 0.5 * step;
        let mid = lo + half;
        total += x.iter().zip(&w).map(|(xi, wi)| wi * f(mid + half * xi)).sum::<f64>() * half;
    }
    total
}

/// `(e^z - 1) / z`, accurate near zero.
pub fn exprel(z: Complex64) -> Complex64 {
    if z.norm() < 1e-3 {
        Complex64::new(1.0, 0.0) + z / 2.0 + z * z / 6.0 + z * z * z / 24.0
    } else {
        (z.exp() - 1.0) / z
    }
}

/// `∫_0^1 v e^{z v} dv = (e^z (z - 1) + 1) / z²`, accurate near zero.
pub fn exprel2(z: Complex64) -> Complex64 {
    if z.norm() < 0.5 {
        // sum_n z^n / (n! (n + 2))
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = Complex64::new(0.5, 0.0);
        for n in 1..30 {
            term *= z / n as f64;
            sum += term / (n + 2) as f64;
        }
        sum
    } else {
        (z.exp() * (z - 1.0) + 1.0) / (z * z)
    }
}

/// Least squares fit `y ≈ a + b x`, returning `(a, b)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - b * mx, b)
}

/// Nonnegative least squares fit `y ≈ a + b x` with `a, b ≥ 0`.
pub fn nonneg_linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let (a, b) = linear_fit(x, y);
    if a >= 0.0 && b >= 0.0 {
        return (a, b);
    }
    let candidates = [
        {
            let sxx: f64 = x.iter().map(|v| v * v).sum();
            let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
            (0.0, if sxx > 0.0 { (sxy / sxx).max(0.0) } else { 0.0 })
        },
        ((y.iter().sum::<f64>() / y.len() as f64).max(0.0), 0.0),
    ];
    let sse = |(a, b): (f64, f64)| -> f64 { x.iter().zip(y).map(|(xi, yi)| (yi - a - b * xi).powi(2)).sum() };
    if sse(candidates[0]) <= sse(candidates[1]) {
        candidates[0]
    } else {
        candidates[1]
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(8);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let m14: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((m14 - 2.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn composite_rule_matches_closed_form() {
        let v = integrate(|x| x.sin(), 0.0, std::f64::consts::PI, 10, 4);
        assert!((v - 2.0).abs() < 1e-13);
    }

    #[test]
    fn exprel_branches_agree() {
        for &z in &[
            Complex64::new(9e-4, 2e-4),
            Complex64::new(0.0, 0.4),
            Complex64::new(0.3, -0.2),
        ] {
            let direct = (z.exp() - 1.0) / z;
            assert!((exprel(z) - direct).norm() < 1e-12);
            let direct2 = (z.exp() * (z - 1.0) + 1.0) / (z * z);
            if z.norm() > 1e-2 {
                assert!((exprel2(z) - direct2).norm() < 1e-10);
            }
        }
        let z = Complex64::new(0.49, 0.1);
        let big = (z.exp() * (z - 1.0) + 1.0) / (z * z);
        assert!((exprel2(z) - big).norm() < 1e-13);
    }

    #[test]
    fn nonneg_fit_recovers_parameters() {
        let x: Vec<f64> = (1..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.5 + 2.0 * v).collect();
        let (a, b) = nonneg_linear_fit(&x, &y);
        assert!((a - 0.5).abs() < 1e-12 && (b - 2.0).abs() < 1e-12);
        let y2: Vec<f64> = x.iter().map(|v| -1.0 + 2.0 * v).collect();
        let (a2, b2) = nonneg_linear_fit(&x, &y2);
        assert!(a2 >= 0.0 && b2 >= 0.0);
    }
}
