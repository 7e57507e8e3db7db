//! Dense symmetric linear algebra for partitioned Hessian operators.
//!
//! The central object is [`PartitionedOperator`]: a symmetric positive definite
//! matrix with a declared split index `s`, viewed as
//!
//! ```text
//!     | top     cross  |
//!     | crossᵀ  bottom |
//! ```
//!
//! with `top` of size `s × s`. The profile matrix is the Schur complement
//! `top − cross · bottom⁻¹ · crossᵀ`, which also equals the inverse of the
//! top-left block of the inverse of the full matrix.

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative asymmetry tolerated by [`PartitionedOperator::new`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;
/// Cholesky pivots below `PD_TOLERANCE · trace` are treated as non-positive.
pub const PD_TOLERANCE: f64 = 1e-12;
/// Eigenvalue floor used when forming symmetric (inverse) square roots.
pub const EIGEN_FLOOR: f64 = 1e-14;
/// Below this dimension the spectral norm is taken from a full SVD.
pub const SVD_CUTOFF: usize = 32;

pub(crate) fn check_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} has non-finite entries")))
    }
}

pub(crate) fn check_square(m: &Matrix, what: &str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

/// Returns `(m + mᵀ) / 2`.
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Largest relative deviation from symmetry, `max|a_ij − a_ji| / max|a_ij|`.
pub fn relative_asymmetry(m: &Matrix) -> f64 {
    let scale = m.amax();
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

/// Largest singular value of `m`.
///
/// Small matrices go straight to an SVD. Larger ones use power iteration on
/// `mᵀm` with an eigen-residual stopping rule and fall back to the SVD when the
/// iteration does not certify its estimate.
pub fn spectral_norm(m: &Matrix) -> Result<f64> {
    check_finite(m, "matrix")?;
    if m.is_empty() {
        return Ok(0.0);
    }
    if m.nrows().min(m.ncols()) < SVD_CUTOFF {
        return Ok(svd_norm(m));
    }
    match power_iteration_norm(m) {
        Some(v) => Ok(v),
        None => Ok(svd_norm(m)),
    }
}

fn svd_norm(m: &Matrix) -> f64 {
    m.clone()
        .singular_values()
        .iter()
        .fold(0.0_f64, |acc, &s| acc.max(s))
}

fn power_iteration_norm(m: &Matrix) -> Option<f64> {
    let gram = m.transpose() * m;
    let n = gram.nrows();
    // Deterministic, generic start vector.
    let mut v = Vector::from_fn(n, |i, _| 1.0 + (0.618_033_988_749_894_9 * (i as f64 + 1.0)).fract());
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..5000 {
        let w = &gram * &v;
        lambda = v.dot(&w);
        let wn = w.norm();
        if wn == 0.0 {
            return Some(0.0);
        }
        let residual = (&w - &v * lambda).norm();
        if residual <= 1e-12 * lambda.abs() {
            return Some(lambda.max(0.0).sqrt());
        }
        v = w / wn;
    }
    let _ = lambda;
    None
}

/// Cholesky factor `L` of a symmetric positive definite matrix, `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    lower: Matrix,
}

impl SpdFactor {
    /// Factorizes `a`; a pivot below `PD_TOLERANCE · trace(a)` is rejected.
    pub fn new(a: &Matrix) -> Result<Self> {
        check_square(a, "matrix")?;
        check_finite(a, "matrix")?;
        let n = a.nrows();
        let threshold = PD_TOLERANCE * a.trace().abs();
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > threshold) || d <= 0.0 {
                return Err(Error::NotPositiveDefinite { index: j, pivot: d });
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Self { lower: l })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    /// Solves `A X = B` column by column.
    pub fn solve(&self, b: &Matrix) -> Matrix {
        let n = self.dim();
        let mut x = b.clone();
        for c in 0..x.ncols() {
            for i in 0..n {
                let mut s = x[(i, c)];
                for k in 0..i {
                    s -= self.lower[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s / self.lower[(i, i)];
            }
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in (i + 1)..n {
                    s -= self.lower[(k, i)] * x[(k, c)];
                }
                x[(i, c)] = s / self.lower[(i, i)];
            }
        }
        x
    }

    pub fn solve_vec(&self, b: &Vector) -> Vector {
        let m = Matrix::from_column_slice(b.len(), 1, b.as_slice());
        Vector::from_column_slice(self.solve(&m).as_slice())
    }

    pub fn inverse(&self) -> Matrix {
        let inv = self.solve(&Matrix::identity(self.dim(), self.dim()));
        symmetrize(&inv)
    }
}

fn sym_eigen(a: &Matrix) -> SymmetricEigen<f64, nalgebra::Dyn> {
    SymmetricEigen::new(symmetrize(a))
}

/// Applies `f` to the eigenvalues of a symmetric matrix (floored at
/// [`EIGEN_FLOOR`]) and reassembles `Q f(Λ) Qᵀ`.
fn sym_function(a: &Matrix, f: impl Fn(f64) -> f64) -> Result<Matrix> {
    check_square(a, "matrix")?;
    check_finite(a, "matrix")?;
    if a.is_empty() {
        return Ok(a.clone());
    }
    let eig = sym_eigen(a);
    let q = &eig.eigenvectors;
    let d = eig.eigenvalues.map(|l| f(l.max(EIGEN_FLOOR)));
    let scaled = q * Matrix::from_diagonal(&d);
    Ok(symmetrize(&(scaled * q.transpose())))
}

/// Symmetric square root of a positive semidefinite matrix.
pub fn sym_sqrt(a: &Matrix) -> Result<Matrix> {
    sym_function(a, f64::sqrt)
}

/// Symmetric inverse square root `A^{-1/2}` of a positive definite matrix.
pub fn sym_inv_sqrt(a: &Matrix) -> Result<Matrix> {
    sym_function(a, |l| 1.0 / l.sqrt())
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &Matrix) -> f64 {
    sym_eigen(a)
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |acc, &l| acc.min(l))
}

/// Dimensions of a sieve problem.
///
/// Coordinates of the ambient space are ordered `(θ, η, κ)`: the first `p`
/// are the target parameter, the next `p1` the sieve nuisance, and the
/// remaining `p_max − p − p1` the truncated tail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SieveFrame {
    pub p: usize,
    pub p1: usize,
    pub p_max: usize,
}

impl SieveFrame {
    /// A frame with `p_max == p + p1` is accepted and has an empty tail.
    pub fn new(p: usize, p1: usize, p_max: usize) -> Result<Self> {
        if p == 0 || p1 == 0 {
            return Err(Error::InvalidInput(format!(
                "frame needs p >= 1 and p1 >= 1, got p={p}, p1={p1}"
            )));
        }
        if p_max < p + p1 {
            return Err(Error::InvalidInput(format!(
                "p_max ({p_max}) must be at least p + p1 ({})",
                p + p1
            )));
        }
        Ok(Self { p, p1, p_max })
    }

    /// `p* = p + p1`.
    pub fn p_star(&self) -> usize {
        self.p + self.p1
    }

    pub fn tail_dim(&self) -> usize {
        self.p_max - self.p_star()
    }

    pub fn has_tail(&self) -> bool {
        self.tail_dim() > 0
    }

    /// `Π_θ υ`: the first `p` coordinates.
    pub fn project_theta(&self, v: &Vector) -> Vector {
        v.rows(0, self.p).into_owned()
    }

    /// `Π_{p*} υ`: the first `p*` coordinates.
    pub fn project_sieve(&self, v: &Vector) -> Vector {
        v.rows(0, self.p_star()).into_owned()
    }

    /// `(Id − Π_{p*}) υ`: the tail coordinates.
    pub fn tail(&self, v: &Vector) -> Vector {
        v.rows(self.p_star(), self.tail_dim()).into_owned()
    }

    /// Natural embedding of a sieve vector into the ambient space (zero tail).
    pub fn embed(&self, sieve: &Vector) -> Vector {
        let mut out = Vector::zeros(self.p_max);
        out.rows_mut(0, sieve.len()).copy_from(sieve);
        out
    }
}

/// Symmetric positive definite matrix with a declared block split.
#[derive(Debug, Clone)]
pub struct PartitionedOperator {
    full: Matrix,
    split: usize,
}

impl PartitionedOperator {
    pub fn new(full: Matrix, split: usize) -> Result<Self> {
        check_square(&full, "operator")?;
        check_finite(&full, "operator")?;
        let n = full.nrows();
        if split == 0 || split >= n {
            return Err(Error::InvalidInput(format!(
                "split {split} must satisfy 0 < split < {n}"
            )));
        }
        let asym = relative_asymmetry(&full);
        if asym > SYMMETRY_TOLERANCE {
            return Err(Error::NotSymmetric(asym));
        }
        let full = symmetrize(&full);
        SpdFactor::new(&full)?;
        Ok(Self { full, split })
    }

    pub fn full(&self) -> &Matrix {
        &self.full
    }

    pub fn split(&self) -> usize {
        self.split
    }

    pub fn dim(&self) -> usize {
        self.full.nrows()
    }

    pub fn top(&self) -> Matrix {
        self.full.view((0, 0), (self.split, self.split)).into_owned()
    }

    pub fn cross(&self) -> Matrix {
        let rest = self.dim() - self.split;
        self.full.view((0, self.split), (self.split, rest)).into_owned()
    }

    pub fn bottom(&self) -> Matrix {
        let rest = self.dim() - self.split;
        self.full.view((self.split, self.split), (rest, rest)).into_owned()
    }
}

/// Schur-complement profile matrix `top − cross · bottom⁻¹ · crossᵀ`.
pub fn profile_matrix(op: &PartitionedOperator) -> Result<Matrix> {
    let bottom = SpdFactor::new(&op.bottom())
        .map_err(|e| Error::SingularBlock(format!("bottom block: {e}")))?;
    let cross = op.cross();
    let solved = bottom.solve(&cross.transpose());
    Ok(symmetrize(&(op.top() - cross * solved)))
}

/// Profile matrix through the inverse of the full operator:
/// `(Π full⁻¹ Πᵀ)⁻¹`. Independent of [`profile_matrix`] and used to cross-check it.
pub fn profile_matrix_via_inverse(op: &PartitionedOperator) -> Result<Matrix> {
    let inv = SpdFactor::new(op.full())?.inverse();
    let s = op.split();
    let corner = inv.view((0, 0), (s, s)).into_owned();
    Ok(SpdFactor::new(&corner)
        .map_err(|e| Error::SingularBlock(format!("inverse corner: {e}")))?
        .inverse())
}

/// Coupling between the top and bottom coordinates of a partitioned operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Identifiability {
    /// `‖H₀⁻¹ A₀ᵀ D₀⁻¹‖` (spectral norm).
    pub rho: f64,
    pub rho_squared: f64,
}

impl Identifiability {
    pub fn violated(&self) -> bool {
        self.rho >= 1.0
    }
}

/// Reads the blocks as `D₀²` (top), `A₀` (cross), `H₀²` (bottom) and returns
/// the spectral norm of `H₀⁻¹ A₀ᵀ D₀⁻¹` together with its square.
///
/// A value `rho >= 1` is logged but still returned.
pub fn identifiability_nu(op: &PartitionedOperator) -> Result<Identifiability> {
    let d_inv = sym_inv_sqrt(&op.top())?;
    let h_inv = sym_inv_sqrt(&op.bottom())?;
    let rho = spectral_norm(&(h_inv * op.cross().transpose() * d_inv))?;
    let out = Identifiability {
        rho,
        rho_squared: rho * rho,
    };
    if out.violated() {
        warn!("identifiability condition violated: rho = {rho:.6}");
    }
    Ok(out)
}

/// `‖I − Ma⁻¹ Mb Mb Ma⁻¹‖` for a symmetric positive definite `Ma` and a
/// symmetric `Mb`; both are the roots, the squaring happens here.
pub fn matrix_closeness(ma: &Matrix, mb: &Matrix) -> Result<f64> {
    check_square(ma, "Ma")?;
    check_square(mb, "Mb")?;
    if ma.nrows() != mb.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "Ma is {}x{}, Mb is {}x{}",
            ma.nrows(),
            ma.ncols(),
            mb.nrows(),
            mb.ncols()
        )));
    }
    check_finite(mb, "Mb")?;
    let ma_inv = SpdFactor::new(&symmetrize(ma))
        .map_err(|e| Error::SingularBlock(format!("Ma: {e}")))?
        .inverse();
    let inner = &ma_inv * mb * mb * &ma_inv;
    let n = ma.nrows();
    spectral_norm(&symmetrize(&(Matrix::identity(n, n) - inner)))
}

/// Principal submatrix `m[start..start+len, start..start+len]`.
pub fn principal_block(m: &Matrix, start: usize, len: usize) -> Matrix {
    m.view((start, start), (len, len)).into_owned()
}

/// Off-diagonal block `m[r0..r0+rows, c0..c0+cols]`.
pub fn block(m: &Matrix, r0: usize, c0: usize, rows: usize, cols: usize) -> Matrix {
    m.view((r0, c0), (rows, cols)).into_owned()
}

/// Serializes a matrix as CSV: a `rows,cols` header, the dimensions, then
/// one line per row. Values use `{:e}` so the round trip is exact.
pub fn matrix_to_csv(m: &Matrix) -> String {
    let mut out = format!("rows,cols\n{},{}\n", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:e}", m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Parses the format written by [`matrix_to_csv`].
pub fn matrix_from_csv(text: &str) -> Result<Matrix> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let header = lines.next().ok_or_else(|| Error::Parse("empty matrix file".into()))?;
    if header.replace(' ', "") != "rows,cols" {
        return Err(Error::Parse(format!("line 1: expected header `rows,cols`, got `{header}`")));
    }
    let dims = lines.next().ok_or_else(|| Error::Parse("line 2: missing dimensions".into()))?;
    let parsed: Vec<usize> = dims
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse(format!("line 2: {e}")))?;
    let [rows, cols] = parsed[..] else {
        return Err(Error::Parse("line 2: expected `rows,cols`".into()));
    };
    let mut data = Vec::with_capacity(rows * cols);
    for (i, line) in lines.enumerate() {
        let vals: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("line {}: {e}", i + 3)))?;
        if vals.len() != cols {
            return Err(Error::Parse(format!(
                "line {}: expected {cols} entries, got {}",
                i + 3,
                vals.len()
            )));
        }
        data.extend(vals);
    }
    if data.len() != rows * cols {
        return Err(Error::Parse(format!(
            "expected {rows} rows, got {}",
            data.len() / cols.max(1)
        )));
    }
    let m = Matrix::from_row_slice(rows, cols, &data);
    check_finite(&m, "matrix file")?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn spectral_norm_identity_and_diagonal() {
        assert_relative_eq!(spectral_norm(&Matrix::identity(3, 3)).unwrap(), 1.0);
        let d = Matrix::from_diagonal(&Vector::from_vec(vec![3.0, -5.0, 2.0]));
        assert_relative_eq!(spectral_norm(&d).unwrap(), 5.0, epsilon = 1e-14);
    }

    #[test]
    fn spectral_norm_rejects_nan() {
        let mut m = Matrix::identity(2, 2);
        m[(0, 1)] = f64::NAN;
        assert!(matches!(spectral_norm(&m), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn power_iteration_path_on_large_diagonal() {
        let d = Vector::from_fn(40, |i, _| 1.0 + i as f64 * 0.25);
        let m = Matrix::from_diagonal(&d);
        assert_relative_eq!(spectral_norm(&m).unwrap(), 10.75, max_relative = 1e-10);
    }

    #[test]
    fn profile_of_two_by_two() {
        let op = PartitionedOperator::new(Matrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]), 1)
            .unwrap();
        assert_relative_eq!(profile_matrix(&op).unwrap()[(0, 0)], 1.5, epsilon = 1e-14);
        assert_relative_eq!(
            profile_matrix_via_inverse(&op).unwrap()[(0, 0)],
            1.5,
            epsilon = 1e-14
        );
    }

    #[test]
    fn decoupled_profile_is_top_block() {
        let full = Matrix::from_row_slice(
            3,
            3,
            &[4.0, 1.0, 0.0, 1.0, 3.0, 0.0, 0.0, 0.0, 7.0],
        );
        let op = PartitionedOperator::new(full.clone(), 2).unwrap();
        let prof = profile_matrix(&op).unwrap();
        assert_relative_eq!(prof, principal_block(&full, 0, 2), epsilon = 1e-14);
    }

    #[test]
    fn partitioned_operator_validation() {
        let asym = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 0.5, 2.0]);
        assert!(matches!(
            PartitionedOperator::new(asym, 1),
            Err(Error::NotSymmetric(_))
        ));
        let indefinite = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            PartitionedOperator::new(indefinite, 1),
            Err(Error::NotPositiveDefinite { .. })
        ));
        assert!(PartitionedOperator::new(Matrix::identity(3, 3), 0).is_err());
        assert!(PartitionedOperator::new(Matrix::identity(3, 3), 3).is_err());
    }

    #[test]
    fn nu_scalar_blocks() {
        let full = Matrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 1.0 + 1e-9]);
        // Keep the operator positive definite: 4·(1+1e-9) − 1 > 0.
        let op = PartitionedOperator::new(full, 1).unwrap();
        let nu = identifiability_nu(&op).unwrap();
        assert_relative_eq!(nu.rho, 0.5, epsilon = 1e-9);
        assert_relative_eq!(nu.rho_squared, 0.25, epsilon = 1e-9);
        assert!(!nu.violated());
    }

    #[test]
    fn nu_decoupled_is_zero() {
        let op = PartitionedOperator::new(Matrix::from_diagonal_element(4, 4, 2.0), 2).unwrap();
        assert_eq!(identifiability_nu(&op).unwrap().rho, 0.0);
    }

    #[test]
    fn closeness_examples() {
        let a = Matrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        assert!(matrix_closeness(&a, &a).unwrap() < 1e-14);
        let i3 = Matrix::identity(3, 3);
        assert_relative_eq!(
            matrix_closeness(&i3, &(&i3 * 1.1)).unwrap(),
            0.21,
            epsilon = 1e-14
        );
        assert!(matches!(
            matrix_closeness(&i3, &Matrix::identity(2, 2)),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matrix_closeness(&Matrix::zeros(2, 2), &Matrix::identity(2, 2)).is_err());
    }

    #[test]
    fn frame_projections() {
        let f = SieveFrame::new(1, 1, 4).unwrap();
        let v = Vector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(f.tail(&v).as_slice(), &[3.0, 4.0]);
        assert_eq!(f.project_theta(&v).as_slice(), &[1.0]);
        assert_eq!(f.embed(&f.project_sieve(&v)).as_slice(), &[1.0, 2.0, 0.0, 0.0]);
        assert!(SieveFrame::new(0, 1, 3).is_err());
        assert!(SieveFrame::new(2, 2, 3).is_err());
        assert!(!SieveFrame::new(2, 2, 4).unwrap().has_tail());
    }

    #[test]
    fn csv_roundtrip() {
        let m = Matrix::from_row_slice(2, 3, &[1.0, -2.5, 1e-17, 0.1, 3.0, 7.25]);
        assert_eq!(matrix_from_csv(&matrix_to_csv(&m)).unwrap(), m);
        assert!(matrix_from_csv("rows,cols\n2,2\n1,2\n").is_err());
        assert!(matrix_from_csv("a,b\n1,1\n1\n").is_err());
    }

    #[test]
    fn sqrt_roundtrip() {
        let a = Matrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let r = sym_sqrt(&a).unwrap();
        assert_relative_eq!(&r * &r, a.clone(), epsilon = 1e-12);
        let ri = sym_inv_sqrt(&a).unwrap();
        assert_relative_eq!(&ri * &a * &ri, Matrix::identity(2, 2), epsilon = 1e-12);
    }
}
