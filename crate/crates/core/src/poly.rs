//! Dense real polynomials with ascending coefficients.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Product of the linear factors `(x + r)` over `shifts`.
pub fn from_negated_roots(shifts: &[f64]) -> Vec<f64> {
    shifts.iter().fold(vec![1.0], |acc, &r| mul(&acc, &[r, 1.0]))
}

pub fn eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

pub fn eval_complex(coeffs: &[f64], z: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

/// Coefficients of `|P(iy)|^2 = P(iy) P(-iy)` as a polynomial in `y`.
pub fn modulus_squared_on_imaginary_axis(coeffs: &[f64]) -> Vec<f64> {
    // P(iy) = Σ c_k i^k y^k; split into real part Re(y) and imaginary part Im(y)
    let mut re = vec![0.0; coeffs.len()];
    let mut im = vec![0.0; coeffs.len()];
    for (k, &c) in coeffs.iter().enumerate() {
        match k % 4 {
            0 => re[k] = c,
            1 => im[k] = c,
            2 => re[k] = -c,
            _ => im[k] = -c,
        }
    }
    let mut out = mul(&re, &re);
    for (o, v) in out.iter_mut().zip(mul(&im, &im)) {
        *o += v;
    }
    out
}

fn trim(coeffs: &[f64]) -> &[f64] {
    let mut n = coeffs.len();
    while n > 0 && coeffs[n - 1] == 0.0 {
        n -= 1;
    }
    &coeffs[..n]
}

/// All complex roots from the eigenvalues of the companion matrix.
pub fn roots(coeffs: &[f64]) -> Vec<Complex64> {
    let c = trim(coeffs);
    if c.len() < 2 {
        return Vec::new();
    }
    let n = c.len() - 1;
    let lead = c[n];
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        m[(i, n - 1)] = -c[i] / lead;
    }
    m.complex_eigenvalues().iter().copied().collect()
}

/// Bisection on a sign-changing bracket until its width drops below `xtol`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, xtol: f64) -> Option<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() || !flo.is_finite() || !fhi.is_finite() {
        return None;
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= xtol || mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Strictly positive real roots, located from the companion eigenvalues and
/// polished by bisection to relative width `rtol`.
pub fn positive_real_roots(coeffs: &[f64], rtol: f64) -> Vec<f64> {
    let f = |x: f64| eval(coeffs, x);
    let mut out: Vec<f64> = roots(coeffs)
        .into_iter()
        .filter(|z| z.re > 0.0 && z.im.abs() <= 1e-7 * z.norm())
        .map(|z| {
            let w = z.re;
            let mut width = 1e-6 * w;
            for _ in 0..30 {
                let (lo, hi) = ((w - width).max(0.0), w + width);
                if let Some(r) = bisect(f, lo, hi, rtol * w) {
                    return r;
                }
                width *= 4.0;
                if width > w {
                    break;
                }
            }
            w
        })
        .collect();
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.abs());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_of_linear_factors() {
        // (x+1)(x+2)(x+3) = 6 + 11x + 6x^2 + x^3
        assert_eq!(from_negated_roots(&[1.0, 2.0, 3.0]), vec![6.0, 11.0, 6.0, 1.0]);
    }

    #[test]
    fn modulus_squared_matches_complex_evaluation() {
        let p = [0.3, -1.2, 2.0, 0.5, -0.7, 1.0];
        let q = modulus_squared_on_imaginary_axis(&p);
        for y in [-2.0, -0.3, 0.0, 0.9, 3.1] {
            let direct = eval_complex(&p, Complex64::new(0.0, y)).norm_sqr();
            assert!((eval(&q, y) - direct).abs() < 1e-10 * (1.0 + direct));
        }
        assert!(q.iter().skip(1).step_by(2).all(|&c| c.abs() < 1e-14));
    }

    #[test]
    fn companion_roots_of_known_polynomial() {
        let p = from_negated_roots(&[-1.0, 2.0, -0.5, 3.0]);
        let pos = positive_real_roots(&p, 1e-14);
        assert_eq!(pos.len(), 2);
        assert!((pos[0] - 0.5).abs() < 1e-12);
        assert!((pos[1] - 1.0).abs() < 1e-12);
        // x^2 + 1 has no real roots
        assert!(positive_real_roots(&[1.0, 0.0, 1.0], 1e-12).is_empty());
    }

    #[test]
    fn bisect_requires_bracket() {
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-12).is_none());
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
    }
}
