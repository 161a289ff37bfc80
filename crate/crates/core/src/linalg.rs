//! Small dense symmetric-matrix helpers on fixed-size arrays.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues at or above `-EIG_CLAMP * max(1, max |lambda|)` count as zero.
pub const EIG_CLAMP: f64 = 1e-12;

fn to_dmatrix<const N: usize>(m: &[[f64; N]; N]) -> DMatrix<f64> {
    // symmetrize so round-off asymmetry never leaks into the decomposition
    DMatrix::from_fn(N, N, |r, c| 0.5 * (m[r][c] + m[c][r]))
}

fn from_dmatrix<const N: usize>(m: &DMatrix<f64>) -> [[f64; N]; N] {
    let mut out = [[0.0; N]; N];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, x) in row.iter_mut().enumerate() {
            *x = m[(r, c)];
        }
    }
    out
}

fn finite<const N: usize>(m: &[[f64; N]; N]) -> Result<()> {
    if m.iter().flatten().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument("matrix has non-finite entries".into()))
    }
}

fn clamped_eigen<const N: usize>(m: &[[f64; N]; N]) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    finite(m)?;
    let mut eig = SymmetricEigen::new(to_dmatrix(m));
    let scale = eig.eigenvalues.iter().fold(1.0f64, |a, l| a.max(l.abs()));
    for l in eig.eigenvalues.iter_mut() {
        if *l < 0.0 {
            if *l < -EIG_CLAMP * scale {
                return Err(Error::NotPsd);
            }
            *l = 0.0;
        }
    }
    Ok(eig)
}

/// Principal square root of a symmetric positive semi-definite matrix.
pub fn symmetric_sqrt<const N: usize>(m: &[[f64; N]; N]) -> Result<[[f64; N]; N]> {
    let eig = clamped_eigen(m)?;
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    let q = &eig.eigenvectors;
    Ok(from_dmatrix(&(q * d * q.transpose())))
}

/// `v' M^-1 v` for symmetric positive definite `M`.
pub fn quad_form_inverse<const N: usize>(m: &[[f64; N]; N], v: &[f64; N]) -> Result<f64> {
    let x = solve_spd(m, v)?;
    Ok(v.iter().zip(x).map(|(a, b)| a * b).sum())
}

/// Solves `M x = b` for symmetric positive definite `M`.
pub fn solve_spd<const N: usize>(m: &[[f64; N]; N], b: &[f64; N]) -> Result<[f64; N]> {
    finite(m)?;
    let chol = to_dmatrix(m).cholesky().ok_or(Error::Singular)?;
    let x = chol.solve(&DVector::from_column_slice(b));
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    let mut out = [0.0; N];
    out.copy_from_slice(x.as_slice());
    Ok(out)
}

/// Inverse of a symmetric positive definite matrix.
pub fn invert_spd<const N: usize>(m: &[[f64; N]; N]) -> Result<[[f64; N]; N]> {
    finite(m)?;
    let inv = to_dmatrix(m).cholesky().ok_or(Error::Singular)?.inverse();
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    Ok(from_dmatrix(&inv))
}

/// `v' M^+ v` with the Moore-Penrose inverse of a PSD matrix, plus the rank
/// used. Eigenvalues at or below `rel_tol * max eigenvalue` are dropped.
pub fn pinv_quad_form<const N: usize>(m: &[[f64; N]; N], v: &[f64; N], rel_tol: f64) -> Result<(f64, usize)> {
    let eig = clamped_eigen(m)?;
    let lmax = eig.eigenvalues.max();
    if !(lmax > 0.0) {
        return Ok((0.0, 0));
    }
    let vv = DVector::from_column_slice(v);
    let mut value = 0.0;
    let mut rank = 0;
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l > rel_tol * lmax {
            let u = eig.eigenvectors.column(k).dot(&vv);
            value += u * u / l;
            rank += 1;
        }
    }
    Ok((value, rank))
}

/// Part of `v` outside the span of eigenvectors kept by [`pinv_quad_form`],
/// as a Euclidean norm.
pub fn null_space_norm<const N: usize>(m: &[[f64; N]; N], v: &[f64; N], rel_tol: f64) -> Result<f64> {
    let eig = clamped_eigen(m)?;
    let lmax = eig.eigenvalues.max();
    let vv = DVector::from_column_slice(v);
    let mut sq = 0.0;
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if !(lmax > 0.0) || l <= rel_tol * lmax {
            let u = eig.eigenvectors.column(k).dot(&vv);
            sq += u * u;
        }
    }
    Ok(sq.sqrt())
}

pub fn matmul<const N: usize, const K: usize, const M: usize>(a: &[[f64; K]; N], b: &[[f64; M]; K]) -> [[f64; M]; N] {
    let mut out = [[0.0; M]; N];
    for r in 0..N {
        for c in 0..M {
            out[r][c] = (0..K).map(|k| a[r][k] * b[k][c]).sum();
        }
    }
    out
}

pub fn transpose<const N: usize, const M: usize>(a: &[[f64; M]; N]) -> [[f64; N]; M] {
    let mut out = [[0.0; N]; M];
    for r in 0..N {
        for c in 0..M {
            out[c][r] = a[r][c];
        }
    }
    out
}

/// `g' M g`.
pub fn quad_form<const N: usize>(m: &[[f64; N]; N], g: &[f64; N]) -> f64 {
    (0..N).map(|r| g[r] * (0..N).map(|c| m[r][c] * g[c]).sum::<f64>()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::RngStream;

    fn random_spd(stream: &mut RngStream) -> [[f64; 4]; 4] {
        let mut a = [[0.0; 4]; 4];
        for row in a.iter_mut() {
            for x in row.iter_mut() {
                *x = stream.normal();
            }
        }
        let mut m = matmul(&a, &transpose(&a));
        for (i, row) in m.iter_mut().enumerate() {
            row[i] += 0.1;
        }
        m
    }

    #[test]
    fn sqrt_examples() {
        let id = [[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(symmetric_sqrt(&id).unwrap(), id);
        let s = symmetric_sqrt(&[[4.0, 0.0], [0.0, 9.0]]).unwrap();
        assert!((s[0][0] - 2.0).abs() < 1e-14 && (s[1][1] - 3.0).abs() < 1e-14 && s[0][1].abs() < 1e-14);
        assert!(matches!(symmetric_sqrt(&[[1.0, 0.0], [0.0, -1.0]]), Err(Error::NotPsd)));
        // tiny negative round-off is clamped
        assert!(symmetric_sqrt(&[[1.0, 0.0], [0.0, -1e-16]]).is_ok());
    }

    #[test]
    fn sqrt_multiplies_back() {
        let mut stream = RngStream::from_seed(5);
        for _ in 0..50 {
            let m = random_spd(&mut stream);
            let s = symmetric_sqrt(&m).unwrap();
            let back = matmul(&s, &s);
            for r in 0..4 {
                for c in 0..4 {
                    assert!((back[r][c] - m[r][c]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn inverse_forms_agree() {
        let mut stream = RngStream::from_seed(6);
        for _ in 0..50 {
            let m = random_spd(&mut stream);
            let v = [stream.normal(), stream.normal(), stream.normal(), stream.normal()];
            let inv = invert_spd(&m).unwrap();
            let direct = quad_form(&inv, &v);
            let q = quad_form_inverse(&m, &v).unwrap();
            let (p, rank) = pinv_quad_form(&m, &v, 1e-10).unwrap();
            assert_eq!(rank, 4);
            assert!((q - direct).abs() < 1e-9 * direct.abs().max(1.0));
            assert!((p - direct).abs() < 1e-9 * direct.abs().max(1.0));
            // whitened norm through the square root of the inverse
            let w = symmetric_sqrt(&inv).unwrap();
            let y: Vec<f64> = (0..4).map(|r| (0..4).map(|c| w[r][c] * v[c]).sum()).collect();
            let norm: f64 = y.iter().map(|x| x * x).sum();
            assert!((norm - direct).abs() < 1e-9 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn pseudo_inverse_rank() {
        // multinomial covariance of a 4-point law has rank 3
        let p = [0.4, 0.3, 0.2, 0.1];
        let mut m = [[0.0; 4]; 4];
        for r in 0..4 {
            for c in 0..4 {
                m[r][c] = if r == c { p[r] } else { 0.0 } - p[r] * p[c];
            }
        }
        let v = [0.1, -0.1, 0.05, -0.05];
        let (_, rank) = pinv_quad_form(&m, &v, 1e-10).unwrap();
        assert_eq!(rank, 3);
        assert!(null_space_norm(&m, &v, 1e-10).unwrap() < 1e-12);
        assert!(null_space_norm(&m, &[1.0; 4], 1e-10).unwrap() > 1.0);
        assert!(matches!(solve_spd(&[[1.0, 1.0], [1.0, 1.0]], &[1.0, 0.0]), Err(Error::Singular)));
    }
}
