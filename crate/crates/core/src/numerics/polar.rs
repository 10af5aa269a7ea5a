use super::{hermitian_eig, max_abs, CMatrix, HermitianMatrix, C64};
use crate::error::{Error, Result};

/// `max |(u*u - 1)_ij|`.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let n = u.ncols();
    max_abs(&(u.adjoint() * u - CMatrix::identity(n, n)))
}

/// Unitary polar factor `u (u*u)^{-1/2}` of a near-unitary matrix.
pub fn repolarize(u: &CMatrix) -> Result<CMatrix> {
    let gram = HermitianMatrix::symmetrized(u.adjoint() * u);
    let eig = hermitian_eig(&gram)?;
    let defect = eig
        .eigenvalues
        .iter()
        .fold(0.0_f64, |acc, &e| acc.max((e - 1.0).abs()));
    if !(defect < 0.5) {
        return Err(Error::NotNearlyUnitary(defect));
    }
    let inv_sqrt = eig.map(|e| C64::new(e.sqrt().recip(), 0.0))?;
    Ok(u * inv_sqrt)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unitary_is_fixed_point() {
        let (s, c) = 0.3f64.sin_cos();
        let u = CMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(c, 0.0),
                C64::new(0.0, s),
                C64::new(0.0, s),
                C64::new(c, 0.0),
            ],
        );
        let v = repolarize(&u).unwrap();
        assert!(max_abs(&(v - &u)) < 1e-12);
    }

    #[test]
    fn scaling_is_removed() {
        let u = CMatrix::identity(3, 3).scale(1.001);
        let v = repolarize(&u).unwrap();
        assert!(max_abs(&(v - CMatrix::identity(3, 3))) < 1e-14);
    }

    #[test]
    fn singular_input_is_rejected() {
        let u = CMatrix::zeros(2, 2);
        assert!(matches!(repolarize(&u), Err(Error::NotNearlyUnitary(_))));
    }

    #[test]
    fn correction_is_bounded_by_defect() {
        let mut u = CMatrix::identity(4, 4);
        u[(0, 1)] = C64::new(1e-4, 2e-4);
        u[(2, 3)] = C64::new(-3e-4, 0.0);
        u[(1, 1)] = C64::new(1.0002, 0.0);
        let v = repolarize(&u).unwrap();
        assert!(unitarity_defect(&v) < 1e-12);
        let gram = u.adjoint() * &u - CMatrix::identity(4, 4);
        let spectral = hermitian_eig(&HermitianMatrix::symmetrized(gram)).unwrap();
        let defect = spectral
            .eigenvalues
            .iter()
            .fold(0.0_f64, |a, e| a.max(e.abs()));
        let diff = &v - &u;
        let sq = hermitian_eig(&HermitianMatrix::symmetrized(diff.adjoint() * &diff)).unwrap();
        let spectral_diff = sq.eigenvalues.last().unwrap().max(0.0).sqrt();
        assert!(spectral_diff <= 2.0 * defect);
    }
}
