//! Dense symmetric/general matrix functions: eigendecomposition, square
//! roots, exponentials, and SPD solves. These back every closed-form
//! trajectory solution in the crate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative eigenvalue floor: eigenvalues at or below `floor * lambda_max`
/// are treated as singular rather than silently regularized.
pub const EIG_FLOOR_REL: f64 = 1e-12;

/// Symmetric eigendecomposition with a deterministic convention:
/// eigenvalues ascending, each eigenvector column signed so its
/// largest-magnitude entry is positive.
#[derive(Debug, Clone)]
pub struct SymEig {
    /// Eigenvalues in ascending order.
    pub eigenvalues: DVector<f64>,
    /// Orthogonal matrix whose columns are the matching eigenvectors.
    pub eigenvectors: DMatrix<f64>,
}

impl SymEig {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Largest eigenvalue (last entry; ascending order).
    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[self.dim() - 1]
    }

    /// Smallest eigenvalue.
    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Reassemble `Q f(Λ) Qᵀ` for a scalar spectral map `f`.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let q = &self.eigenvectors;
        let d = DMatrix::from_diagonal(&self.eigenvalues.map(f));
        q * d * q.transpose()
    }

    /// Reconstruct the original matrix `Q Λ Qᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.apply(|x| x)
    }

    /// Absolute floor below which eigenvalues of this matrix count as
    /// singular for inversion/square-root purposes.
    pub fn floor(&self) -> f64 {
        EIG_FLOOR_REL * self.max_eigenvalue().abs()
    }

    /// Check all eigenvalues sit strictly above the relative floor.
    pub fn require_spd(&self, context: &str) -> Result<()> {
        let floor = self.floor();
        let lmin = self.min_eigenvalue();
        if self.max_eigenvalue() <= 0.0 || lmin <= floor {
            return Err(Error::SingularMatrix {
                context: context.to_string(),
                eigenvalue: lmin,
                floor,
            });
        }
        Ok(())
    }

    /// Solve `A x = b` through the eigenbasis. Errors on eigenvalues below
    /// the floor.
    pub fn solve(&self, b: &DVector<f64>, context: &str) -> Result<DVector<f64>> {
        self.require_spd(context)?;
        let q = &self.eigenvectors;
        let mut y = q.transpose() * b;
        for (yi, li) in y.iter_mut().zip(self.eigenvalues.iter()) {
            *yi /= li;
        }
        Ok(q * y)
    }

    /// Inverse through the eigenbasis, with the same floor policy.
    pub fn inverse(&self, context: &str) -> Result<DMatrix<f64>> {
        self.require_spd(context)?;
        Ok(self.apply(|l| 1.0 / l))
    }
}

/// Non-symmetric generalized square root `sqrt(G⁻¹ H)` together with the
/// smallest eigenvalue met along the way (a conditioning report).
#[derive(Debug, Clone)]
pub struct GeneralizedSqrtResult {
    pub value: DMatrix<f64>,
    /// Smallest eigenvalue encountered across the inner factorizations.
    pub min_eigenvalue: f64,
}

fn require_square(a: &DMatrix<f64>, context: &str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::invalid(
            context,
            format!("expected square matrix, got {}x{}", a.nrows(), a.ncols()),
        ));
    }
    if a.nrows() == 0 {
        return Err(Error::invalid(context, "empty matrix"));
    }
    Ok(())
}

fn require_finite(a: &DMatrix<f64>, context: &str) -> Result<()> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid(context, "non-finite entry"));
    }
    Ok(())
}

/// Eigendecomposition of a symmetric matrix. The input is symmetrized as
/// `(A + Aᵀ)/2` first; asymmetry beyond `1e-10` (relative) is rejected.
pub fn sym_eig(a: &DMatrix<f64>) -> Result<SymEig> {
    let ctx = "matfun::sym_eig";
    require_square(a, ctx)?;
    require_finite(a, ctx)?;
    let scale = a.amax().max(1.0);
    let asym = (a - a.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(Error::invalid(
            ctx,
            format!("matrix is not symmetric (max asymmetry {asym:e})"),
        ));
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();

    // Sort ascending and pin column signs so the factorization is a pure
    // function of the input.
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut values = DVector::zeros(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        let mut col = eig.eigenvectors.column(src).clone_owned();
        let lead = col
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        if col[lead] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    Ok(SymEig {
        eigenvalues: values,
        eigenvectors: vectors,
    })
}

/// Symmetric square root of an SPD matrix.
pub fn spd_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eig(a)?;
    eig.require_spd("matfun::spd_sqrt")?;
    Ok(eig.apply(f64::sqrt))
}

/// Symmetric inverse square root of an SPD matrix.
pub fn spd_inv_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eig(a)?;
    eig.require_spd("matfun::spd_inv_sqrt")?;
    Ok(eig.apply(|l| 1.0 / l.sqrt()))
}

/// Square root of `G⁻¹ H` for SPD `G`, `H`.
///
/// `G⁻¹H` is not symmetric, but it is similar to the SPD matrix
/// `G^{-1/2} H G^{-1/2}`; the root is computed as
/// `G^{-1/2} (G^{-1/2} H G^{-1/2})^{1/2} G^{1/2}` so only symmetric
/// factorizations ever occur.
pub fn pair_sqrt(g: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<GeneralizedSqrtResult> {
    let ctx = "matfun::pair_sqrt";
    if g.shape() != h.shape() {
        return Err(Error::invalid(
            ctx,
            format!("dimension mismatch: G is {:?}, H is {:?}", g.shape(), h.shape()),
        ));
    }
    let eig_g = sym_eig(g)?;
    eig_g.require_spd(ctx)?;
    let g_sqrt = eig_g.apply(f64::sqrt);
    let g_inv_sqrt = eig_g.apply(|l| 1.0 / l.sqrt());

    let inner = &g_inv_sqrt * h * &g_inv_sqrt;
    let eig_inner = sym_eig(&inner)?;
    eig_inner.require_spd(ctx)?;
    let inner_sqrt = eig_inner.apply(f64::sqrt);

    let min_eigenvalue = eig_g.min_eigenvalue().min(eig_inner.min_eigenvalue());
    Ok(GeneralizedSqrtResult {
        value: g_inv_sqrt * inner_sqrt * g_sqrt,
        min_eigenvalue,
    })
}

/// Matrix exponential `exp(A t)` by scaling-and-squaring with a fixed-order
/// Taylor series. `exp(0) = I` exactly.
pub fn mat_exp(a: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    let ctx = "matfun::mat_exp";
    require_square(a, ctx)?;
    require_finite(a, ctx)?;
    if !t.is_finite() {
        return Err(Error::invalid(ctx, "non-finite time"));
    }
    let n = a.nrows();
    let b = a * t;
    let norm = b.amax() * n as f64; // cheap bound on the 1-norm

    // Scale so the series argument has norm <= 0.5, then square back up.
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    if squarings > 1000 {
        return Err(Error::overflow(ctx, format!("norm {norm:e} too large")));
    }
    let scaled = &b / 2f64.powi(squarings as i32);

    // 18 Taylor terms at ||X|| <= 0.5 leave a truncation error below 1e-19.
    let mut result = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..=18 {
        term = (&term * &scaled) / k as f64;
        result += &term;
    }
    for _ in 0..squarings {
        result = &result * &result;
        if result.iter().any(|x| !x.is_finite()) {
            return Err(Error::overflow(ctx, "overflow while squaring"));
        }
    }
    Ok(result)
}

/// Convenience: is the matrix skew-symmetric within `tol` (absolute)?
pub fn is_skew_symmetric(a: &DMatrix<f64>, tol: f64) -> bool {
    a.nrows() == a.ncols() && (a + a.transpose()).amax() <= tol
}

/// Random SPD matrix with eigenvalues in `[lo, hi]`; test and experiment
/// helper shared across modules.
pub fn random_spd(
    dim: usize,
    lo: f64,
    hi: f64,
    rng: &mut impl rand::Rng,
) -> DMatrix<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let raw = DMatrix::from_fn(dim, dim, |_, _| -> f64 { StandardNormal.sample(rng) });
    // Orthonormalize a random Gaussian matrix via QR to get a random basis.
    let qr = raw.qr();
    let q = qr.q();
    let values = DVector::from_fn(dim, |_, _| rng.random_range(lo..=hi));
    &q * DMatrix::from_diagonal(&values) * q.transpose()
}
