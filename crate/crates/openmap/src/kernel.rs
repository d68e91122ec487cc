//! Numeric kernel: dense matrix series, eigendecomposition with
//! defectiveness detection, and extremization of derivative magnitudes
//! over cells.

use nalgebra::{Complex, DMatrix, DVector};

use crate::model::{Interval, OpenMapModel};

type C64 = Complex<f64>;

/// Residual bound for accepted eigenpairs.
pub const EIG_RESIDUAL_TOL: f64 = 1e-9;
/// Eigenvector-matrix condition number beyond which the matrix is treated
/// as defective.
pub const DEFECTIVE_COND: f64 = 1e8;
/// Eigenvalues within this distance of 1 block the closed-form expansions.
pub const UNIT_EIG_TOL: f64 = 1e-9;
/// Spectral radii above `1 - RHO_MARGIN` block the geometric-series solve.
pub const RHO_MARGIN: f64 = 1e-9;
/// Grid intervals for composed-derivative extremization.
pub const EXTREMIZE_GRID: usize = 4096;

#[derive(Clone, Debug, thiserror::Error)]
pub enum KernelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("spectral radius {0} is too close to or above 1")]
    SpectralRadiusTooLarge(f64),
    #[error("eigenbasis expansion unavailable: {0}")]
    ExpansionUnavailable(String),
    #[error("refined extremum escaped its sound envelope: {0}")]
    EnvelopeViolation(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Iterated products `A^0 e, A^1 e, ..., A^n e` by repeated application.
pub fn matrix_power_apply(
    a: &DMatrix<f64>,
    e: &DVector<f64>,
    n: usize,
) -> Result<Vec<DVector<f64>>, KernelError> {
    check_dims(a, e)?;
    let mut out = Vec::with_capacity(n + 1);
    out.push(e.clone());
    for _ in 0..n {
        let next = a * out.last().unwrap();
        out.push(next);
    }
    Ok(out)
}

/// Partial Neumann sum `sum_{i=0}^n A^i e`, accumulated from the same terms
/// as [`matrix_power_apply`].
pub fn neumann_partial(
    a: &DMatrix<f64>,
    e: &DVector<f64>,
    n: usize,
) -> Result<DVector<f64>, KernelError> {
    check_dims(a, e)?;
    let mut sum = e.clone();
    let mut term = e.clone();
    for _ in 0..n {
        term = a * &term;
        sum += &term;
    }
    Ok(sum)
}

/// Closed-form partial sum `(I-A)^{-1}(I - A^{n+1}) e` and the limit
/// `(I-A)^{-1} e`, requiring a spectral radius safely below 1.
pub fn closed_form_sum(
    a: &DMatrix<f64>,
    e: &DVector<f64>,
    n: usize,
) -> Result<(DVector<f64>, DVector<f64>), KernelError> {
    check_dims(a, e)?;
    let rho = spectral_radius(a);
    if rho >= 1.0 - RHO_MARGIN {
        return Err(KernelError::SpectralRadiusTooLarge(rho));
    }
    let m = a.nrows();
    let system = DMatrix::identity(m, m) - a;
    let lu = system.lu();
    let limit = lu
        .solve(e)
        .ok_or(KernelError::SpectralRadiusTooLarge(rho))?;
    let tail = matrix_power_apply(a, e, n + 1)?.pop().unwrap();
    let partial = lu
        .solve(&(e - tail))
        .ok_or(KernelError::SpectralRadiusTooLarge(rho))?;
    Ok((partial, limit))
}

pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    eigenvalues_robust(a)
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max)
}

/// Eigenvalues via zero-row/column deflation and a bounded Schur iteration.
///
/// Hole rows make every transition matrix here structurally singular, and
/// the unbounded QR iteration can stall on such matrices (a zero matrix
/// never converges). Each zero row or column contributes an exact zero
/// eigenvalue and the minor carries the rest; the dense core then goes
/// through `Schur::try_new` with a bounded iteration count, retried once
/// under a fixed orthogonal similarity transform.
fn eigenvalues_robust(a: &DMatrix<f64>) -> Vec<C64> {
    let n = a.nrows();
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![C64::new(a[(0, 0)], 0.0)];
    }
    for idx in 0..n {
        let zero_row = (0..n).all(|c| a[(idx, c)] == 0.0);
        let zero_col = (0..n).all(|r| a[(r, idx)] == 0.0);
        if zero_row || zero_col {
            let minor = a.clone().remove_row(idx).remove_column(idx);
            let mut eigs = eigenvalues_robust(&minor);
            eigs.push(C64::new(0.0, 0.0));
            return eigs;
        }
    }
    if let Some(schur) = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, 100_000) {
        return schur.complex_eigenvalues().iter().copied().collect();
    }
    let q = fixed_orthogonal(n);
    let rotated = q.transpose() * a * &q;
    if let Some(schur) = nalgebra::linalg::Schur::try_new(rotated, f64::EPSILON, 100_000) {
        return schur.complex_eigenvalues().iter().copied().collect();
    }
    // last resort for a non-converging iteration: Gershgorin disc centers
    (0..n).map(|k| C64::new(a[(k, k)], 0.0)).collect()
}

/// A fixed orthogonal matrix from the QR factorization of a deterministic
/// pseudo-random matrix.
fn fixed_orthogonal(n: usize) -> DMatrix<f64> {
    let mut state = 0x9e3779b97f4a7c15u64;
    let m = DMatrix::from_fn(n, n, |_, _| {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    });
    m.qr().q()
}

/// Eigendecomposition of a small dense matrix.
#[derive(Clone, Debug)]
pub struct SpectralData {
    /// All eigenvalues (algebraic multiplicity), sorted by modulus then real
    /// then imaginary part, descending.
    pub eigenvalues: Vec<C64>,
    /// Eigenvector columns aligned with `eigenvalues`; `None` when no full
    /// eigenbasis was found.
    pub eigenvectors: Option<DMatrix<C64>>,
    pub nondefective: bool,
    pub spectral_radius: f64,
}

/// Expansion of a vector in an eigenbasis: `e = sum c_i v_i`, with
/// `s_i = 1 . v_i` the column sums.
#[derive(Clone, Debug)]
pub struct ExpansionCoefficients {
    pub c: Vec<C64>,
    pub s: Vec<C64>,
}

impl ExpansionCoefficients {
    /// The products `c_i * s_i` that weight each eigenvalue power.
    pub fn weights(&self) -> Vec<C64> {
        self.c.iter().zip(&self.s).map(|(c, s)| c * s).collect()
    }
}

/// Compute eigenvalues via the real Schur form and eigenvectors as complex
/// null spaces of `A - lambda I`, one cluster of nearby eigenvalues at a
/// time. Defectiveness is flagged when some cluster yields fewer null
/// directions than its multiplicity, when the eigenvector matrix has
/// condition number above [`DEFECTIVE_COND`], or when a residual exceeds
/// [`EIG_RESIDUAL_TOL`].
pub fn spectral(a: &DMatrix<f64>) -> Result<SpectralData, KernelError> {
    if a.nrows() != a.ncols() {
        return Err(KernelError::DimensionMismatch(format!(
            "matrix is {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    let mut eigs = eigenvalues_robust(a);
    eigs.sort_by(|p, q| {
        q.norm()
            .total_cmp(&p.norm())
            .then(q.re.total_cmp(&p.re))
            .then(q.im.total_cmp(&p.im))
    });
    let rho = eigs.iter().map(|l| l.norm()).fold(0.0, f64::max);

    // cluster nearby eigenvalues so repeated roots share one null space
    let cluster_tol = 1e-8 * (1.0 + rho);
    let mut clusters: Vec<Vec<C64>> = Vec::new();
    for &l in &eigs {
        match clusters
            .iter_mut()
            .find(|c| (c[0] - l).norm() <= cluster_tol)
        {
            Some(c) => c.push(l),
            None => clusters.push(vec![l]),
        }
    }

    let ac: DMatrix<C64> = a.map(|x| C64::new(x, 0.0));
    let scale = a.amax().max(1.0);
    let rank_tol = 1e-8 * (1.0 + scale);
    let mut ordered_eigs = Vec::with_capacity(n);
    let mut columns: Vec<DVector<C64>> = Vec::with_capacity(n);
    let mut full_basis = true;
    for cluster in &clusters {
        let mean = cluster.iter().sum::<C64>() / C64::new(cluster.len() as f64, 0.0);
        let mut shifted = ac.clone();
        for k in 0..n {
            shifted[(k, k)] -= mean;
        }
        let mut basis = complex_null_space(shifted, rank_tol);
        basis.truncate(cluster.len());
        if basis.len() < cluster.len() {
            full_basis = false;
        }
        for v in basis {
            ordered_eigs.push(mean);
            columns.push(v);
        }
    }

    let mut nondefective = full_basis && columns.len() == n;
    let eigenvectors = if columns.len() == n {
        let v = DMatrix::from_columns(&columns);
        // residual check per pair
        for (k, lambda) in ordered_eigs.iter().enumerate() {
            let col = v.column(k).into_owned();
            let resid = (&ac * &col - col.scale(1.0) * *lambda).norm();
            if resid > EIG_RESIDUAL_TOL * col.norm().max(1e-300) {
                nondefective = false;
            }
        }
        // conditioning check
        match v.clone().try_inverse() {
            Some(vinv) => {
                let cond = one_norm(&v) * one_norm(&vinv);
                if cond > DEFECTIVE_COND {
                    nondefective = false;
                }
            }
            None => nondefective = false,
        }
        Some(v)
    } else {
        None
    };

    // keep the full algebraic multiset in the reported order
    let eigenvalues = if ordered_eigs.len() == n {
        ordered_eigs
    } else {
        eigs
    };

    Ok(SpectralData {
        eigenvalues,
        eigenvectors,
        nondefective,
        spectral_radius: rho,
    })
}

/// Expand `e` in the eigenbasis. Fails when the matrix is defective or has
/// an eigenvalue equal to 1 within [`UNIT_EIG_TOL`].
pub fn expand(e: &DVector<f64>, data: &SpectralData) -> Result<ExpansionCoefficients, KernelError> {
    if !data.nondefective {
        return Err(KernelError::ExpansionUnavailable(
            "matrix is defective or its eigenbasis is unreliable".into(),
        ));
    }
    if let Some(l) = data
        .eigenvalues
        .iter()
        .find(|l| (*l - C64::new(1.0, 0.0)).norm() <= UNIT_EIG_TOL)
    {
        return Err(KernelError::ExpansionUnavailable(format!(
            "eigenvalue {l} equals 1 within tolerance"
        )));
    }
    let v = data
        .eigenvectors
        .as_ref()
        .ok_or_else(|| KernelError::ExpansionUnavailable("no eigenbasis".into()))?;
    if v.nrows() != e.len() {
        return Err(KernelError::DimensionMismatch(format!(
            "vector length {} vs matrix order {}",
            e.len(),
            v.nrows()
        )));
    }
    let ec: DVector<C64> = e.map(|x| C64::new(x, 0.0));
    let c = v
        .clone()
        .lu()
        .solve(&ec)
        .ok_or_else(|| KernelError::ExpansionUnavailable("eigenbasis is singular".into()))?;
    let resid = (v * &c - &ec).norm();
    if resid > EIG_RESIDUAL_TOL * ec.norm().max(1.0) {
        return Err(KernelError::ExpansionUnavailable(format!(
            "reconstruction residual {resid:.3e}"
        )));
    }
    let s: Vec<C64> = (0..v.ncols()).map(|k| v.column(k).sum()).collect();
    Ok(ExpansionCoefficients {
        c: c.iter().copied().collect(),
        s,
    })
}

/// Null-space basis of a complex matrix via Gaussian elimination with full
/// pivoting. Vectors are unit-norm with a deterministic phase (largest
/// component real positive).
fn complex_null_space(mut b: DMatrix<C64>, tol: f64) -> Vec<DVector<C64>> {
    let n = b.nrows();
    let mut col_of: Vec<usize> = (0..n).collect(); // permuted column -> original
    let mut rank = 0;
    for step in 0..n {
        let mut best = (step, step, 0.0_f64);
        for r in step..n {
            for c in step..n {
                let mag = b[(r, c)].norm();
                if mag > best.2 {
                    best = (r, c, mag);
                }
            }
        }
        if best.2 <= tol {
            break;
        }
        b.swap_rows(step, best.0);
        b.swap_columns(step, best.1);
        col_of.swap(step, best.1);
        for r in step + 1..n {
            let factor = b[(r, step)] / b[(step, step)];
            for c in step..n {
                let sub = factor * b[(step, c)];
                b[(r, c)] -= sub;
            }
        }
        rank += 1;
    }

    let mut out = Vec::with_capacity(n - rank);
    for free in rank..n {
        let mut x = vec![C64::new(0.0, 0.0); n]; // in permuted coordinates
        x[free] = C64::new(1.0, 0.0);
        for j in (0..rank).rev() {
            let mut acc = C64::new(0.0, 0.0);
            for k in j + 1..n {
                acc += b[(j, k)] * x[k];
            }
            x[j] = -acc / b[(j, j)];
        }
        let mut v = DVector::from_element(n, C64::new(0.0, 0.0));
        for (permuted, &original) in col_of.iter().enumerate() {
            v[original] = x[permuted];
        }
        let norm = v.norm();
        if norm > 0.0 {
            v /= C64::new(norm, 0.0);
        }
        // deterministic phase
        let lead = (0..n).max_by(|&p, &q| v[p].norm().total_cmp(&v[q].norm())).unwrap();
        let mag = v[lead].norm();
        if mag > 0.0 {
            let phase = v[lead] / C64::new(mag, 0.0);
            v /= phase;
        }
        out.push(v);
    }
    out
}

fn one_norm(m: &DMatrix<C64>) -> f64 {
    (0..m.ncols())
        .map(|c| m.column(c).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn check_dims(a: &DMatrix<f64>, e: &DVector<f64>) -> Result<(), KernelError> {
    if a.nrows() != a.ncols() || a.ncols() != e.len() {
        return Err(KernelError::DimensionMismatch(format!(
            "matrix {}x{} applied to vector of length {}",
            a.nrows(),
            a.ncols(),
            e.len()
        )));
    }
    Ok(())
}

/// `(inf, sup)` of `|(f^t)'(x)|^{-1}` over a cell whose forward itinerary is
/// well defined for `t` steps.
///
/// Depth 1 is certified: the extrema of `|f'|` come from the critical
/// points of the derivative plus the endpoints (exact for affine branches).
/// Depth `t >= 2` extremizes the smooth product `prod |f'(f^k x)|` by a
/// dense grid with golden-section refinement, then verifies the result
/// against the interval product of the per-step depth-1 bounds.
pub fn extremize_inverse_derivative(
    model: &OpenMapModel,
    cell: Interval,
    depth: usize,
) -> Result<(f64, f64), KernelError> {
    if depth == 0 {
        return Err(KernelError::InvalidInput("depth must be at least 1".into()));
    }
    let width = cell.measure();
    if width.is_nan() || width <= 0.0 {
        return Err(KernelError::InvalidInput(format!(
            "cell {cell} has no measure"
        )));
    }
    if depth == 1 {
        let i = model.cell_of(cell.midpoint());
        let (dmin, dmax) = model.branch(i).abs_deriv_range(cell.lo, cell.hi);
        if dmin <= 0.0 {
            return Err(KernelError::InvalidInput(format!(
                "derivative vanishes on {cell}"
            )));
        }
        return Ok((1.0 / dmax, 1.0 / dmin));
    }

    // itinerary of the cell under the closed map
    let mut cells = Vec::with_capacity(depth + 1);
    let mut cur = cell;
    for _ in 0..depth {
        let i = model.cell_of(cur.midpoint());
        cells.push(i);
        let (lo, hi) = model.branch(i).image(cur.lo, cur.hi);
        cur = Interval::new(lo, hi);
    }
    cells.push(model.cell_of(cur.midpoint()));

    // sound envelope from per-step depth-1 bounds over the step cells
    let mut env_lo = 1.0_f64;
    let mut env_hi = 1.0_f64;
    for k in 0..depth {
        let step_cell = model
            .cell_intersection(cells[k], cells[k + 1])
            .map(|c| c.interval)
            .unwrap_or_else(|| model.partition().interval(cells[k]));
        let (dmin, dmax) = model.branch(cells[k]).abs_deriv_range(step_cell.lo, step_cell.hi);
        if dmin <= 0.0 {
            return Err(KernelError::InvalidInput(format!(
                "derivative vanishes along the orbit of {cell}"
            )));
        }
        env_lo *= dmin;
        env_hi *= dmax;
    }

    let product = |x: f64| -> f64 {
        let mut value = 1.0;
        let mut p = x;
        for &i in &cells[..depth] {
            value *= model.branch(i).deriv_eval(p).abs();
            p = model.branch(i).eval(p);
        }
        value
    };

    let (lo, hi) = (cell.lo, cell.hi);
    let step = (hi - lo) / EXTREMIZE_GRID as f64;
    let mut min_val = f64::INFINITY;
    let mut max_val = f64::NEG_INFINITY;
    let mut min_idx = 0;
    let mut max_idx = 0;
    for k in 0..=EXTREMIZE_GRID {
        let x = if k == EXTREMIZE_GRID { hi } else { lo + step * k as f64 };
        let v = product(x);
        if v < min_val {
            min_val = v;
            min_idx = k;
        }
        if v > max_val {
            max_val = v;
            max_idx = k;
        }
    }
    let bracket = |idx: usize| -> (f64, f64) {
        let a = lo + step * idx.saturating_sub(1) as f64;
        let b = (lo + step * (idx + 1) as f64).min(hi);
        (a, b)
    };
    let (a, b) = bracket(min_idx);
    min_val = min_val.min(golden_minimize(&product, a, b));
    let (a, b) = bracket(max_idx);
    max_val = max_val.max(-golden_minimize(&|x: f64| -product(x), a, b));

    let slack = 1e-9;
    if min_val < env_lo * (1.0 - slack) - 1e-300 || max_val > env_hi * (1.0 + slack) + 1e-300 {
        return Err(KernelError::EnvelopeViolation(format!(
            "extrema [{min_val}, {max_val}] vs envelope [{env_lo}, {env_hi}] on {cell}"
        )));
    }
    if min_val <= 0.0 {
        return Err(KernelError::InvalidInput(format!(
            "composed derivative vanishes on {cell}"
        )));
    }
    Ok((1.0 / max_val, 1.0 / min_val))
}

/// Golden-section minimum of `f` on `[a, b]`; returns the best value seen.
fn golden_minimize(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    const INVPHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INVPHI * (b - a);
    let mut x2 = a + INVPHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut best = f1.min(f2).min(f(a)).min(f(b));
    for _ in 0..90 {
        if b - a <= 1e-13 {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INVPHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INVPHI * (b - a);
            f2 = f(x2);
        }
        best = best.min(f1).min(f2);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn tent_matrix() -> DMatrix<f64> {
        DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 0.5, 0.5, //
                0.0, 0.0, 0.5, 0.5, //
                0.5, 0.5, 0.0, 0.0,
            ],
        )
    }

    fn tent_hole_vector() -> DVector<f64> {
        DVector::from_vec(vec![0.25, 0.0, 0.0, 0.0])
    }

    #[test]
    fn power_apply_matches_hand_products() {
        let a = tent_matrix();
        let e = tent_hole_vector();
        let terms = matrix_power_apply(&a, &e, 2).unwrap();
        assert_eq!(terms[0], e);
        assert_eq!(
            terms[1],
            DVector::from_vec(vec![0.0, 0.0, 0.0, 0.125])
        );
        assert_eq!(
            terms[2],
            DVector::from_vec(vec![0.0, 0.0625, 0.0625, 0.0])
        );
    }

    #[test]
    fn neumann_accumulates_the_same_terms() {
        let a = tent_matrix();
        let e = tent_hole_vector();
        assert_eq!(neumann_partial(&a, &e, 0).unwrap(), e);
        assert_eq!(
            neumann_partial(&a, &e, 1).unwrap(),
            DVector::from_vec(vec![0.25, 0.0, 0.0, 0.125])
        );
        // bitwise agreement with a fold over the power terms
        let terms = matrix_power_apply(&a, &e, 7).unwrap();
        let mut fold = terms[0].clone();
        for t in &terms[1..] {
            fold += t;
        }
        assert_eq!(neumann_partial(&a, &e, 7).unwrap(), fold);
    }

    #[test]
    fn nilpotent_series_terminates() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        let e = DVector::from_vec(vec![0.5, 0.0]);
        let terms = matrix_power_apply(&a, &e, 2).unwrap();
        assert_eq!(terms[2], DVector::from_vec(vec![0.0, 0.0]));
        for n in 1..5 {
            assert_eq!(
                neumann_partial(&a, &e, n).unwrap(),
                DVector::from_vec(vec![0.5, 0.5])
            );
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let a = DMatrix::zeros(2, 2);
        let e = DVector::zeros(3);
        assert!(matches!(
            matrix_power_apply(&a, &e, 1),
            Err(KernelError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn closed_form_agrees_with_neumann() {
        let a = tent_matrix();
        let e = tent_hole_vector();
        let (partial, limit) = closed_form_sum(&a, &e, 7).unwrap();
        let direct = neumann_partial(&a, &e, 7).unwrap();
        assert!((partial - direct).amax() < 1e-12);
        // total escape is the whole interval
        assert_abs_diff_eq!(limit.sum(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn closed_form_of_zero_matrix_is_e() {
        let a = DMatrix::zeros(3, 3);
        let e = DVector::from_vec(vec![0.3, 0.1, 0.0]);
        let (partial, limit) = closed_form_sum(&a, &e, 5).unwrap();
        assert_eq!(partial, e);
        assert_eq!(limit, e);
    }

    #[test]
    fn closed_form_refuses_large_radius() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5]);
        let e = DVector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(
            closed_form_sum(&a, &e, 3),
            Err(KernelError::SpectralRadiusTooLarge(_))
        ));
    }

    #[test]
    fn tent_spectrum_is_recovered() {
        let data = spectral(&tent_matrix()).unwrap();
        assert!(data.nondefective);
        let phi = 5.0_f64.sqrt();
        let want = [(1.0 + phi) / 4.0, (1.0 - phi) / 4.0, 0.0, 0.0];
        let mut got: Vec<f64> = data.eigenvalues.iter().map(|l| l.re).collect();
        got.sort_by(|p, q| q.total_cmp(p));
        let mut want_sorted = want;
        want_sorted.sort_by(|p, q| q.total_cmp(p));
        for (g, w) in got.iter().zip(want_sorted) {
            assert_abs_diff_eq!(*g, w, epsilon = 1e-10);
        }
        for l in &data.eigenvalues {
            assert!(l.im.abs() < 1e-10);
        }
        assert_abs_diff_eq!(data.spectral_radius, (1.0 + phi) / 4.0, epsilon = 1e-10);
    }

    #[test]
    fn identity_blocks_expansion() {
        let a = DMatrix::identity(2, 2);
        let data = spectral(&a).unwrap();
        assert!(data.nondefective);
        let e = DVector::from_vec(vec![0.5, 0.5]);
        assert!(matches!(
            expand(&e, &data),
            Err(KernelError::ExpansionUnavailable(_))
        ));
    }

    #[test]
    fn jordan_block_is_defective() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let data = spectral(&a).unwrap();
        assert!(!data.nondefective);
        let e = DVector::from_vec(vec![1.0, 0.0]);
        assert!(expand(&e, &data).is_err());
    }

    #[test]
    fn expansion_reconstructs_the_vector() {
        let a = tent_matrix();
        let e = tent_hole_vector();
        let data = spectral(&a).unwrap();
        let exp = expand(&e, &data).unwrap();
        let v = data.eigenvectors.as_ref().unwrap();
        let rebuilt = v * DVector::from_vec(exp.c.clone());
        for k in 0..4 {
            assert!((rebuilt[k] - C64::new(e[k], 0.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn extremize_affine_is_exact() {
        let model = fixtures::tent();
        let cell = model.cell_intersection(1, 2).unwrap().interval;
        let (lo, hi) = extremize_inverse_derivative(&model, cell, 1).unwrap();
        assert_eq!(lo, 0.5);
        assert_eq!(hi, 0.5);
    }

    #[test]
    fn extremize_cubic_depth_one() {
        let model = fixtures::cubic();
        // on xi_23, |g'| ranges from 1/4 (at the cell edge) up to g'(x_24)
        let cell = model.cell_intersection(1, 2).unwrap().interval;
        let (lo, hi) = extremize_inverse_derivative(&model, cell, 1).unwrap();
        assert_abs_diff_eq!(hi, 4.0, epsilon = 1e-9);
        assert_abs_diff_eq!(lo, 0.2956, epsilon = 1e-3);
        // near 0 the slope tends to 11/2
        let (lo0, _hi0) = extremize_inverse_derivative(
            &model,
            crate::model::Interval::new(0.0, 1e-6),
            1,
        )
        .unwrap();
        assert_abs_diff_eq!(lo0, 2.0 / 11.0, epsilon = 1e-5);
    }

    #[test]
    fn extremize_depth_two_matches_sampling() {
        let model = fixtures::cubic();
        let cell = model.path_cell(&[3, 1, 3]).unwrap().interval;
        let (inv_lo, inv_hi) = extremize_inverse_derivative(&model, cell, 2).unwrap();
        // dense independent sampling of |(g^2)'|^{-1}
        let mut smin = f64::INFINITY;
        let mut smax = f64::NEG_INFINITY;
        for k in 0..=20_000 {
            let x = cell.lo + (cell.hi - cell.lo) * k as f64 / 20_000.0;
            let d1 = model.branch(3).deriv_eval(x).abs();
            let y = model.branch(3).eval(x);
            let d2 = model.branch(model.cell_of(y)).deriv_eval(y).abs();
            let v = 1.0 / (d1 * d2);
            smin = smin.min(v);
            smax = smax.max(v);
        }
        assert!(inv_lo <= smin + 1e-9 && inv_hi >= smax - 1e-9);
        assert_abs_diff_eq!(inv_lo, smin, epsilon = 1e-4);
        assert_abs_diff_eq!(inv_hi, smax, epsilon = 1e-4);
    }

    #[test]
    fn extremize_sandwiches_random_samples() {
        use rand::{Rng, SeedableRng};
        let model = fixtures::cubic();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for word in [vec![1usize, 2], vec![3, 1, 3], vec![3, 1, 2]] {
            let cell = model.path_cell(&word).unwrap().interval;
            let depth = word.len() - 1;
            let (inv_lo, inv_hi) = extremize_inverse_derivative(&model, cell, depth).unwrap();
            for _ in 0..10_000 {
                let x = cell.lo + rng.gen::<f64>() * (cell.hi - cell.lo);
                let mut value = 1.0;
                let mut p = x;
                for &i in &word[..depth] {
                    value *= model.branch(i).deriv_eval(p).abs();
                    p = model.branch(i).eval(p);
                }
                let inv = 1.0 / value;
                assert!(inv >= inv_lo - 1e-9 && inv <= inv_hi + 1e-9);
            }
        }
    }

    proptest! {
        #[test]
        fn closed_form_matches_neumann_for_contractions(seed in 0u64..200) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m = rng.gen_range(2..=8usize);
            let mut a = DMatrix::from_fn(m, m, |_, _| rng.gen::<f64>());
            let rho = spectral_radius(&a);
            if rho > 0.0 {
                a *= 0.9 / rho;
            }
            let e = DVector::from_fn(m, |_, _| rng.gen::<f64>());
            let n = rng.gen_range(0..=20usize);
            let (partial, _) = closed_form_sum(&a, &e, n).unwrap();
            let direct = neumann_partial(&a, &e, n).unwrap();
            prop_assert!((partial - direct).amax() < 1e-10);
        }

        #[test]
        fn expansion_reconstructs_power_sums(seed in 0u64..100) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m = rng.gen_range(2..=6usize);
            let a = DMatrix::from_fn(m, m, |_, _| rng.gen::<f64>());
            let e = DVector::from_fn(m, |_, _| rng.gen::<f64>());
            let data = spectral(&a).unwrap();
            prop_assume!(data.nondefective);
            let exp = match expand(&e, &data) {
                Ok(x) => x,
                Err(_) => return Ok(()), // unit eigenvalue drawn
            };
            let weights = exp.weights();
            let terms = matrix_power_apply(&a, &e, 50).unwrap();
            for (n, term) in terms.iter().enumerate() {
                let direct: f64 = term.sum();
                let mut acc = C64::new(0.0, 0.0);
                for (w, l) in weights.iter().zip(&data.eigenvalues) {
                    acc += w * complex_pow(*l, n);
                }
                let tol = 1e-9 * direct.abs().max(1.0);
                prop_assert!(acc.im.abs() < tol, "imaginary residue {}", acc.im);
                prop_assert!((acc.re - direct).abs() < tol, "n={n}: {} vs {}", acc.re, direct);
            }
        }
    }

    fn complex_pow(l: C64, n: usize) -> C64 {
        let mut acc = C64::new(1.0, 0.0);
        for _ in 0..n {
            acc *= l;
        }
        acc
    }
}
