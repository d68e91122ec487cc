//! Escape series: exact for piecewise-affine maps, lower/upper bounds for
//! nonlinear ones, plus eigenbasis closed forms and spectral classification
//! of long-run survival.

use nalgebra::{Complex, DMatrix, DVector};

use crate::kernel::{self, KernelError};
use crate::model::{MapClass, OpenMapModel};

type C64 = Complex<f64>;

/// Lower and upper weighted transition matrices with the hole vector and
/// the ones row. The matrices coincide for piecewise-affine maps.
#[derive(Clone, Debug)]
pub struct BoundMatrixPair {
    pub lower: DMatrix<f64>,
    pub upper: DMatrix<f64>,
    /// Cell measures on hole indices, zero elsewhere.
    pub hole_vector: DVector<f64>,
    pub ones: DVector<f64>,
    /// True when the map is piecewise affine, making both matrices equal
    /// and the series exact.
    pub exact: bool,
}

/// Entries are `inf`/`sup` of `|f'|^{-1}` over each nonempty depth-1 cell;
/// hole rows are zero.
pub fn build_matrices(model: &OpenMapModel) -> Result<BoundMatrixPair, KernelError> {
    let m = model.cell_count();
    let mut lower = DMatrix::zeros(m, m);
    let mut upper = DMatrix::zeros(m, m);
    for i in (0..m).filter(|&i| !model.is_hole(i)) {
        for j in 0..m {
            if let Some(cell) = model.cell_intersection(i, j) {
                let (lo, hi) = kernel::extremize_inverse_derivative(model, cell.interval, 1)?;
                lower[(i, j)] = lo;
                upper[(i, j)] = hi;
            }
        }
    }
    let hole_vector = DVector::from_fn(m, |i, _| {
        if model.is_hole(i) {
            model.partition().measure(i)
        } else {
            0.0
        }
    });
    Ok(BoundMatrixPair {
        lower,
        upper,
        hole_vector,
        ones: DVector::from_element(m, 1.0),
        exact: model.class() == MapClass::Affine,
    })
}

/// One time step of an escape series. `x` is the measure escaping exactly
/// at `n`, `y` the measure escaped by `n`; values are raw (not clamped).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesRow {
    pub n: usize,
    pub x_lower: f64,
    pub x_upper: f64,
    pub y_lower: f64,
    pub y_upper: f64,
    pub exact: bool,
}

impl SeriesRow {
    pub fn p_lower(&self) -> f64 {
        1.0 - self.y_upper
    }

    pub fn p_upper(&self) -> f64 {
        1.0 - self.y_lower
    }
}

/// Per-step escape records; `exact` marks coinciding lower/upper sides.
#[derive(Clone, Debug)]
pub struct EscapeSeries {
    pub rows: Vec<SeriesRow>,
    pub exact: bool,
}

impl EscapeSeries {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// CSV in the fixed schema
    /// `n,X_lower,X_upper,Y_lower,Y_upper,P_lower,P_upper,exact`.
    /// Values are clamped to `[0, 1]` unless `clamp` is false.
    pub fn to_csv(&self, clamp: bool) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&csv_row(r, clamp));
            out.push('\n');
        }
        out
    }
}

pub const CSV_HEADER: &str = "n,X_lower,X_upper,Y_lower,Y_upper,P_lower,P_upper,exact";
pub const CSV_HEADER_REDUCED: &str =
    "n,X_lower,X_upper,Y_lower,Y_upper,P_lower,P_upper,exact,X_lower_S,X_upper_S,Y_lower_S,Y_upper_S";

fn fmt_value(v: f64, clamp: bool) -> String {
    let v = if clamp { v.clamp(0.0, 1.0) } else { v };
    format!("{v}")
}

fn csv_row(r: &SeriesRow, clamp: bool) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        r.n,
        fmt_value(r.x_lower, clamp),
        fmt_value(r.x_upper, clamp),
        fmt_value(r.y_lower, clamp),
        fmt_value(r.y_upper, clamp),
        fmt_value(r.p_lower(), clamp),
        fmt_value(r.p_upper(), clamp),
        r.exact
    )
}

/// CSV with the reduced-system bounds appended per row.
pub fn csv_with_reduced(base: &EscapeSeries, reduced: &EscapeSeries, clamp: bool) -> String {
    let mut out = String::from(CSV_HEADER_REDUCED);
    out.push('\n');
    for (r, s) in base.rows.iter().zip(&reduced.rows) {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            csv_row(r, clamp),
            fmt_value(s.x_lower, clamp),
            fmt_value(s.x_upper, clamp),
            fmt_value(s.y_lower, clamp),
            fmt_value(s.y_upper, clamp),
        ));
    }
    out
}

/// Series for an arbitrary (matrix, ones, hole-vector) system; shared by
/// the base pair and by reduced systems. The `y` column accumulates the
/// `x` terms so that `y_n - y_{n-1} = x_n` holds bitwise per side.
pub(crate) fn series_from_parts(
    lower: &DMatrix<f64>,
    upper: &DMatrix<f64>,
    ones: &DVector<f64>,
    e: &DVector<f64>,
    n_max: usize,
    exact: bool,
) -> EscapeSeries {
    let lo_terms = kernel::matrix_power_apply(lower, e, n_max).expect("consistent dimensions");
    let up_terms = if exact {
        None
    } else {
        Some(kernel::matrix_power_apply(upper, e, n_max).expect("consistent dimensions"))
    };
    let mut rows = Vec::with_capacity(n_max + 1);
    let (mut y_lo, mut y_up) = (0.0_f64, 0.0_f64);
    for n in 0..=n_max {
        let x_lo = ones.dot(&lo_terms[n]);
        let x_up = match &up_terms {
            Some(terms) => ones.dot(&terms[n]),
            None => x_lo,
        };
        y_lo += x_lo;
        y_up += x_up;
        rows.push(SeriesRow {
            n,
            x_lower: x_lo,
            x_upper: x_up,
            y_lower: y_lo,
            y_upper: y_up,
            exact,
        });
    }
    EscapeSeries { rows, exact }
}

/// Escape series from the bound matrices via repeated application.
pub fn escape_series(pair: &BoundMatrixPair, n_max: usize) -> EscapeSeries {
    series_from_parts(
        &pair.lower,
        &pair.upper,
        &pair.ones,
        &pair.hole_vector,
        n_max,
        pair.exact,
    )
}

/// Escape series evaluated through the eigenbasis closed forms, together
/// with the `(weight, eigenvalue)` terms of each side's expansion.
#[derive(Clone, Debug)]
pub struct EigenEscape {
    pub series: EscapeSeries,
    pub lower_terms: Vec<(C64, C64)>,
    pub upper_terms: Vec<(C64, C64)>,
}

/// Evaluate `x_n = sum w_i l_i^n` and `y_n = sum w_i (1-l_i^{n+1})/(1-l_i)`
/// per side. Requires nondefective matrices with no unit eigenvalue;
/// imaginary residues above tolerance are treated as expansion failures.
pub fn eigen_escape(pair: &BoundMatrixPair, n_max: usize) -> Result<EigenEscape, KernelError> {
    let lower_terms = side_terms(&pair.lower, &pair.hole_vector)?;
    let upper_terms = if pair.exact {
        lower_terms.clone()
    } else {
        side_terms(&pair.upper, &pair.hole_vector)?
    };
    let mut rows = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let (x_lo, y_lo) = eval_terms(&lower_terms, n)?;
        let (x_up, y_up) = if pair.exact {
            (x_lo, y_lo)
        } else {
            eval_terms(&upper_terms, n)?
        };
        rows.push(SeriesRow {
            n,
            x_lower: x_lo,
            x_upper: x_up,
            y_lower: y_lo,
            y_upper: y_up,
            exact: pair.exact,
        });
    }
    Ok(EigenEscape {
        series: EscapeSeries {
            rows,
            exact: pair.exact,
        },
        lower_terms,
        upper_terms,
    })
}

fn side_terms(a: &DMatrix<f64>, e: &DVector<f64>) -> Result<Vec<(C64, C64)>, KernelError> {
    let data = kernel::spectral(a)?;
    let expansion = kernel::expand(e, &data)?;
    Ok(expansion
        .weights()
        .into_iter()
        .zip(data.eigenvalues.iter().copied())
        .collect())
}

fn eval_terms(terms: &[(C64, C64)], n: usize) -> Result<(f64, f64), KernelError> {
    let one = C64::new(1.0, 0.0);
    let mut x = C64::new(0.0, 0.0);
    let mut y = C64::new(0.0, 0.0);
    for &(w, l) in terms {
        let ln = complex_pow(l, n);
        x += w * ln;
        y += w * (one - ln * l) / (one - l);
    }
    let tol_x = 1e-9 * x.re.abs().max(1.0);
    let tol_y = 1e-9 * y.re.abs().max(1.0);
    if x.im.abs() > tol_x || y.im.abs() > tol_y {
        return Err(KernelError::ExpansionUnavailable(format!(
            "imaginary residue {} / {} at n={n}",
            x.im, y.im
        )));
    }
    Ok((x.re, y.re))
}

fn complex_pow(l: C64, n: usize) -> C64 {
    let mut acc = C64::new(1.0, 0.0);
    for _ in 0..n {
        acc *= l;
    }
    acc
}

/// Long-run survival regime of one transition matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SurvivalClass {
    /// Zero spectral radius: everything escapes by the witness step.
    FiniteTimeFullEscape { witness: usize },
    /// Spectral radius strictly inside (0, 1): survival decays to zero.
    AsymptoticFullEscape { spectral_radius: f64 },
    /// Spectral radius at or above 1; for upper-bound matrices this means
    /// the bound is eventually vacuous.
    Inconclusive { spectral_radius: f64 },
}

impl std::fmt::Display for SurvivalClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SurvivalClass::FiniteTimeFullEscape { witness } => {
                write!(f, "finite-time full escape (by step {witness})")
            }
            SurvivalClass::AsymptoticFullEscape { spectral_radius } => {
                write!(f, "asymptotic full escape (rho = {spectral_radius:.6})")
            }
            SurvivalClass::Inconclusive { spectral_radius } => {
                write!(f, "inconclusive (rho = {spectral_radius:.6})")
            }
        }
    }
}

/// Classification of both sides of a bound pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Classification {
    pub lower: SurvivalClass,
    pub upper: SurvivalClass,
}

pub fn classify(pair: &BoundMatrixPair) -> Classification {
    Classification {
        lower: classify_matrix(&pair.lower),
        upper: classify_matrix(&pair.upper),
    }
}

pub fn classify_matrix(a: &DMatrix<f64>) -> SurvivalClass {
    let rho = kernel::spectral_radius(a);
    if rho <= 1e-9 {
        let m = a.nrows();
        let mut power = a.clone();
        let mut index = 1;
        while index < m && power.amax() > 1e-12 {
            power = &power * a;
            index += 1;
        }
        SurvivalClass::FiniteTimeFullEscape {
            witness: index.saturating_sub(1),
        }
    } else if rho < 1.0 - 1e-9 {
        SurvivalClass::AsymptoticFullEscape {
            spectral_radius: rho,
        }
    } else {
        SurvivalClass::Inconclusive {
            spectral_radius: rho,
        }
    }
}

/// Fixed-precision matrix display with row/column labels.
pub fn format_matrix(m: &DMatrix<f64>, labels: &[String], precision: usize) -> String {
    let width = labels
        .iter()
        .map(|l| l.len())
        .max()
        .unwrap_or(1)
        .max(precision + 4);
    let mut out = String::new();
    out.push_str(&format!("{:>width$} ", ""));
    for l in labels {
        out.push_str(&format!("{l:>width$} "));
    }
    out.push('\n');
    for (r, label) in labels.iter().enumerate() {
        out.push_str(&format!("{label:>width$} "));
        for c in 0..m.ncols() {
            out.push_str(&format!("{:>width$.precision$} ", m[(r, c)]));
        }
        out.push('\n');
    }
    out
}
