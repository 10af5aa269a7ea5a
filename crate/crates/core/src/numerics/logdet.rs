use std::f64::consts::TAU;

use super::{CMatrix, HermitianMatrix, C64};
use crate::error::{Error, Result};

/// `log det m` for Hermitian positive-definite `m` (Cholesky route).
pub fn logdet_pos(m: &HermitianMatrix) -> Result<f64> {
    let chol = nalgebra::Cholesky::new(m.as_matrix().clone())
        .ok_or_else(|| Error::Determinant("matrix is not positive definite".into()))?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..m.dim() {
        let pivot = l[(i, i)];
        let d = pivot.re;
        if pivot.im.abs() > 1e-12 * d.abs() {
            return Err(Error::Determinant("matrix is not positive definite".into()));
        }
        if !(d.is_normal() && d > 0.0) {
            return Err(Error::Determinant(format!(
                "Cholesky pivot {i} underflowed ({d:e})"
            )));
        }
        acc += d.ln();
    }
    Ok(2.0 * acc)
}

/// Principal-branch `log det m` of a general square matrix (LU route).
///
/// The imaginary part is the sum of the pivot arguments reduced to
/// `(-pi, pi]`; use [`unwrap_log_branch`] to follow a continuous branch along
/// a parameter grid.
pub fn logdet(m: &CMatrix) -> Result<C64> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "logdet of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    let lu = m.clone().lu();
    let sign: C64 = lu.p().determinant();
    let u = lu.u();
    let mut acc = if sign.re < 0.0 {
        C64::new(0.0, std::f64::consts::PI)
    } else {
        C64::new(0.0, 0.0)
    };
    for i in 0..m.nrows() {
        let pivot = u[(i, i)];
        let modulus = pivot.norm();
        if !(modulus.is_normal()) {
            return Err(Error::Determinant(format!(
                "LU pivot {i} has modulus {modulus:e}"
            )));
        }
        acc += C64::new(modulus.ln(), pivot.arg());
    }
    Ok(C64::new(acc.re, wrap_phase(acc.im)))
}

fn wrap_phase(x: f64) -> f64 {
    let y = x - TAU * (x / TAU).round();
    if y <= -std::f64::consts::PI {
        y + TAU
    } else {
        y
    }
}

/// Shifts imaginary parts by multiples of `2 pi` so that consecutive samples
/// differ by less than `pi`, walking outward from `origin` in both directions.
/// The sample at `origin` is left untouched.
pub fn unwrap_log_branch(values: &mut [C64], origin: usize) {
    for i in origin + 1..values.len() {
        let prev = values[i - 1].im;
        values[i].im += TAU * ((prev - values[i].im) / TAU).round();
    }
    for i in (0..origin).rev() {
        let next = values[i + 1].im;
        values[i].im += TAU * ((next - values[i].im) / TAU).round();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn positive_examples() {
        assert_abs_diff_eq!(
            logdet_pos(&HermitianMatrix::identity(5)).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        let d = HermitianMatrix::from_real_diagonal(&[2.0, 3.0]);
        assert_abs_diff_eq!(logdet_pos(&d).unwrap(), 6f64.ln(), epsilon = 1e-15);
        // 1 + exp(-beta h) for a single zero-energy mode.
        let one_plus = HermitianMatrix::from_real_diagonal(&[1.0 + 0f64.exp()]);
        assert_abs_diff_eq!(logdet_pos(&one_plus).unwrap(), 2f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn indefinite_is_rejected() {
        let d = HermitianMatrix::from_real_diagonal(&[2.0, -3.0]);
        assert!(matches!(logdet_pos(&d), Err(Error::Determinant(_))));
        let z = CMatrix::zeros(2, 2);
        assert!(logdet(&z).is_err());
    }

    #[test]
    fn product_rule_for_commuting_pairs() {
        let a = HermitianMatrix::from_real_diagonal(&[2.0, 0.5, 7.0]);
        let b = HermitianMatrix::from_real_diagonal(&[1.5, 3.0, 0.25]);
        let ab = HermitianMatrix::new(a.as_matrix() * b.as_matrix()).unwrap();
        let lhs = logdet_pos(&ab).unwrap();
        assert_abs_diff_eq!(
            lhs,
            logdet_pos(&a).unwrap() + logdet_pos(&b).unwrap(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn general_logdet_matches_diagonal_phases() {
        let m = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            C64::from_polar(2.0, 0.4),
            C64::from_polar(0.5, -1.1),
            C64::new(-1.0, 0.0),
        ]));
        let ld = logdet(&m).unwrap();
        assert_abs_diff_eq!(ld.re, 1f64.ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(
            ld.im,
            wrap_phase(0.4 - 1.1 + std::f64::consts::PI),
            epsilon = 1e-14
        );
    }

    #[test]
    fn unwrap_recovers_linear_phase() {
        let truth: Vec<f64> = (0..40).map(|k| -3.0 + 0.4 * k as f64).collect();
        let mut wrapped: Vec<C64> = truth
            .iter()
            .map(|&t| C64::new(0.0, wrap_phase(t)))
            .collect();
        let origin = 10;
        wrapped[origin].im = truth[origin];
        unwrap_log_branch(&mut wrapped, origin);
        for (w, t) in wrapped.iter().zip(&truth) {
            assert_abs_diff_eq!(w.im, *t, epsilon = 1e-12);
        }
    }
}
