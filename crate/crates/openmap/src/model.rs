//! Piecewise maps with Markov partitions and holes.
//!
//! A model is a partition `0 = q_0 < q_1 < ... < q_m = 1` into half-open
//! cells `(q_{i-1}, q_i]`, one affine or polynomial branch per cell, a set
//! of hole cells, and a declared image `[q_j, q_{j+k}]` per cell. The
//! reference measure is Lebesgue on `[0, 1]` throughout.
//!
//! Cell indices are 0-based in this API; file formats and display use the
//! 1-based numbering of the cells.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::polyroot;

/// Residual tolerance for the Markov image check.
pub const MARKOV_TOL: f64 = 1e-9;
/// Minimum admissible `inf |f'|` on non-hole cells.
pub const DERIV_FLOOR: f64 = 1e-9;
/// Width below which a depth-1 cell intersection counts as empty.
pub const EMPTY_TOL: f64 = 1e-12;
/// Width below which an iterated-preimage cell counts as empty. Smaller
/// than [`EMPTY_TOL`] so that genuine deep cylinders survive while
/// float-noise slivers at shared endpoints do not.
pub const PATH_EMPTY_TOL: f64 = 1e-15;

/// A half-open interval `(lo, hi]` inside `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn measure(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Containment with the half-open convention.
    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x <= self.hi
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}]", self.lo, self.hi)
    }
}

/// An interval with a provenance label such as `xi_23` or `xi_424`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub interval: Interval,
    pub label: String,
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}", self.label, self.interval)
    }
}

/// Render an itinerary word as a 1-based label, e.g. `[3,1,3]` -> "424".
pub fn word_label(word: &[usize], cell_count: usize) -> String {
    let parts: Vec<String> = word.iter().map(|&i| (i + 1).to_string()).collect();
    if cell_count <= 9 {
        parts.concat()
    } else {
        parts.join(".")
    }
}

/// The ordered cut points of a Markov partition.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    cuts: Vec<f64>,
}

impl Partition {
    pub fn cell_count(&self) -> usize {
        self.cuts.len() - 1
    }

    pub fn cut(&self, k: usize) -> f64 {
        self.cuts[k]
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    /// The half-open cell `(q_i, q_{i+1}]`.
    pub fn interval(&self, i: usize) -> Interval {
        Interval::new(self.cuts[i], self.cuts[i + 1])
    }

    pub fn measure(&self, i: usize) -> f64 {
        self.cuts[i + 1] - self.cuts[i]
    }

    /// Cell index containing `x` under the `(lo, hi]` convention; the
    /// measure-zero point `x = 0` is assigned to the first cell.
    pub fn locate(&self, x: f64) -> usize {
        let m = self.cell_count();
        match self.cuts[1..m].binary_search_by(|q| q.partial_cmp(&x).unwrap()) {
            Ok(k) => k,
            Err(k) => k.min(m - 1),
        }
    }

    /// Index of the cut point equal to `x` within `tol`, if any.
    fn snap_cut(&self, x: f64, tol: f64) -> Option<usize> {
        (0..self.cuts.len()).find(|&k| (self.cuts[k] - x).abs() <= tol)
    }
}

/// One branch of the map, restricted to a single partition cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Branch {
    Affine { slope: f64, intercept: f64 },
    Poly { coeffs: Vec<f64> },
}

impl Branch {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Branch::Affine { slope, intercept } => slope * x + intercept,
            Branch::Poly { coeffs } => polyroot::eval(coeffs, x),
        }
    }

    pub fn deriv_eval(&self, x: f64) -> f64 {
        match self {
            Branch::Affine { slope, .. } => *slope,
            Branch::Poly { coeffs } => polyroot::eval(&polyroot::derivative(coeffs), x),
        }
    }

    /// Ascending coefficient form (affine branches as degree-1 polynomials).
    pub fn coeffs(&self) -> Vec<f64> {
        match self {
            Branch::Affine { slope, intercept } => vec![*intercept, *slope],
            Branch::Poly { coeffs } => coeffs.clone(),
        }
    }

    /// Whether the branch is affine (including degree <= 1 polynomials).
    pub fn is_affine(&self) -> bool {
        match self {
            Branch::Affine { .. } => true,
            Branch::Poly { coeffs } => coeffs.iter().skip(2).all(|&c| c == 0.0),
        }
    }

    /// `min` and `max` of `|f'|` over `[a, b]`, from the critical points of
    /// the derivative plus the endpoints.
    pub fn abs_deriv_range(&self, a: f64, b: f64) -> (f64, f64) {
        match self {
            Branch::Affine { slope, .. } => (slope.abs(), slope.abs()),
            Branch::Poly { coeffs } => {
                let d1 = polyroot::derivative(coeffs);
                let d2 = polyroot::derivative(&d1);
                let mut lo = f64::INFINITY;
                let mut hi = 0.0_f64;
                let mut take = |x: f64| {
                    let v = polyroot::eval(&d1, x).abs();
                    lo = lo.min(v);
                    hi = hi.max(v);
                };
                take(a);
                take(b);
                for r in polyroot::real_roots_in(&d2, a, b) {
                    take(r);
                }
                (lo, hi)
            }
        }
    }

    /// Whether the branch is monotone on `[a, b]`: the sign of `f'` does not
    /// flip across its zeros (touching zero is allowed).
    pub fn is_monotone(&self, a: f64, b: f64) -> bool {
        match self {
            Branch::Affine { .. } => true,
            Branch::Poly { coeffs } => {
                let d1 = polyroot::derivative(coeffs);
                let mut nodes = vec![a];
                nodes.extend(polyroot::real_roots_in(&d1, a, b));
                nodes.push(b);
                let mut sign = 0.0;
                for w in nodes.windows(2) {
                    let v = polyroot::eval(&d1, 0.5 * (w[0] + w[1]));
                    if v != 0.0 {
                        if sign != 0.0 && v.signum() != sign {
                            return false;
                        }
                        sign = v.signum();
                    }
                }
                true
            }
        }
    }

    /// Solve `f(x) = y` on `[a, b]` where the branch is monotone.
    pub fn invert(&self, y: f64, a: f64, b: f64, slack: f64) -> Option<f64> {
        match self {
            Branch::Affine { slope, intercept } => {
                if *slope == 0.0 {
                    return None;
                }
                let x = (y - intercept) / slope;
                if x >= a - slack && x <= b + slack {
                    Some(x.clamp(a, b))
                } else {
                    None
                }
            }
            Branch::Poly { coeffs } => polyroot::invert_monotone(coeffs, y, a, b, slack),
        }
    }

    /// Closure of the branch image of `[a, b]`, endpoints sorted.
    pub fn image(&self, a: f64, b: f64) -> (f64, f64) {
        let (fa, fb) = (self.eval(a), self.eval(b));
        if fa <= fb {
            (fa, fb)
        } else {
            (fb, fa)
        }
    }
}

/// Map class: exact matrices for piecewise-affine maps, interval bounds
/// otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MapClass {
    Affine,
    Nonlinear,
}

impl fmt::Display for MapClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MapClass::Affine => write!(f, "affine (exact)"),
            MapClass::Nonlinear => write!(f, "nonlinear (bounds)"),
        }
    }
}

/// On-disk model schema.
///
/// `hole` carries 1-based cell indices; `images` gives the declared closed
/// image `[lo, hi]` of each cell, whose endpoints must be cut points.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub cut_points: Vec<f64>,
    pub branches: Vec<Branch>,
    pub hole: Vec<usize>,
    pub images: Vec<[f64; 2]>,
}

impl ModelFile {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::Malformed(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }
}

/// Validation and model errors with the offending cell (0-based internally,
/// displayed 1-based).
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("malformed model: {0}")]
    Malformed(String),
    #[error("cell {}: empty or inverted cell", .0 + 1)]
    EmptyCell(usize),
    #[error("cell {}: branch is not monotone on its cell", .0 + 1)]
    NonMonotoneBranch(usize),
    #[error("cell {}: |f'| reaches {1:.3e}, below the floor of 1e-9", .0 + 1)]
    VanishingDerivative(usize, f64),
    #[error("cell {}: image mismatch, residual {1:.3e}", .0 + 1)]
    NonMarkovImage(usize, f64),
    #[error("point {0} is outside [0, 1]")]
    PointOutOfDomain(f64),
}

/// Per-cell validation data.
#[derive(Clone, Debug)]
pub struct CellCheck {
    pub cell: usize,
    pub is_hole: bool,
    pub interval: Interval,
    pub declared_image: (f64, f64),
    pub computed_image: (f64, f64),
    pub image_residual: f64,
    /// `(inf, sup)` of `|f'|` over the closed cell.
    pub abs_derivative: (f64, f64),
    pub monotone: bool,
}

/// Outcome of validating a [`ModelFile`].
#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub checks: Vec<CellCheck>,
    pub class: MapClass,
    pub causes: Vec<ModelError>,
}

impl ValidationReport {
    pub fn accepted(&self) -> bool {
        self.causes.is_empty()
    }

    /// Plain-text table of the per-cell checks.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("cell  role   interval                |f'| in                residual   monotone\n");
        for c in &self.checks {
            out.push_str(&format!(
                "{:<5} {:<6} ({:.6}, {:.6}]    [{:.4}, {:.4}]    {:.2e}   {}\n",
                c.cell + 1,
                if c.is_hole { "hole" } else { "map" },
                c.interval.lo,
                c.interval.hi,
                c.abs_derivative.0,
                c.abs_derivative.1,
                c.image_residual,
                if c.monotone { "yes" } else { "NO" },
            ));
        }
        out.push_str(&format!("class: {}\n", self.class));
        out.push_str(&format!(
            "accepted: {}\n",
            if self.accepted() { "yes" } else { "no" }
        ));
        for cause in &self.causes {
            out.push_str(&format!("cause: {cause}\n"));
        }
        out
    }
}

/// Validate a model file without constructing the model.
pub fn validate(file: &ModelFile) -> ValidationReport {
    let mut causes = Vec::new();
    let mut checks = Vec::new();

    if let Err(e) = structural_check(file) {
        return ValidationReport {
            checks,
            class: MapClass::Nonlinear,
            causes: vec![e],
        };
    }

    let cuts = &file.cut_points;
    let m = cuts.len() - 1;
    for i in 0..m {
        if cuts[i + 1] <= cuts[i] {
            causes.push(ModelError::EmptyCell(i));
        }
    }
    if !causes.is_empty() {
        return ValidationReport {
            checks,
            class: MapClass::Nonlinear,
            causes,
        };
    }

    let partition = Partition { cuts: cuts.clone() };
    let hole: BTreeSet<usize> = file.hole.iter().map(|&i| i - 1).collect();
    let class = if (0..m)
        .filter(|i| !hole.contains(i))
        .all(|i| file.branches[i].is_affine())
    {
        MapClass::Affine
    } else {
        MapClass::Nonlinear
    };

    for i in 0..m {
        let iv = partition.interval(i);
        let is_hole = hole.contains(&i);
        let branch = &file.branches[i];
        let monotone = branch.is_monotone(iv.lo, iv.hi);
        let abs_derivative = branch.abs_deriv_range(iv.lo, iv.hi);
        let declared = (file.images[i][0], file.images[i][1]);
        let computed = branch.image(iv.lo, iv.hi);
        let image_residual = (computed.0 - declared.0)
            .abs()
            .max((computed.1 - declared.1).abs());

        // Declared image endpoints must be cut points spanning >= 1 cell;
        // this is needed for all cells so the transition graphs are well
        // defined, including the closed system's.
        let lo_cut = partition.snap_cut(declared.0, MARKOV_TOL);
        let hi_cut = partition.snap_cut(declared.1, MARKOV_TOL);
        let spans_cells = matches!((lo_cut, hi_cut), (Some(a), Some(b)) if a < b);
        if !spans_cells {
            causes.push(ModelError::NonMarkovImage(i, f64::INFINITY));
        }

        if !is_hole {
            if !monotone {
                causes.push(ModelError::NonMonotoneBranch(i));
            }
            if abs_derivative.0 < DERIV_FLOOR {
                causes.push(ModelError::VanishingDerivative(i, abs_derivative.0));
            }
            if spans_cells && image_residual > MARKOV_TOL {
                causes.push(ModelError::NonMarkovImage(i, image_residual));
            }
        }

        checks.push(CellCheck {
            cell: i,
            is_hole,
            interval: iv,
            declared_image: declared,
            computed_image: computed,
            image_residual,
            abs_derivative,
            monotone,
        });
    }

    ValidationReport {
        checks,
        class,
        causes,
    }
}

fn structural_check(file: &ModelFile) -> Result<(), ModelError> {
    let n = file.cut_points.len();
    if n < 3 {
        return Err(ModelError::Malformed(
            "cut_points must describe at least two cells".into(),
        ));
    }
    if file.cut_points.iter().any(|q| !q.is_finite()) {
        return Err(ModelError::Malformed("cut_points must be finite".into()));
    }
    if file.cut_points[0] != 0.0 || file.cut_points[n - 1] != 1.0 {
        return Err(ModelError::Malformed(
            "cut_points must start at 0 and end at 1".into(),
        ));
    }
    let m = n - 1;
    if file.branches.len() != m {
        return Err(ModelError::Malformed(format!(
            "expected {m} branches, found {}",
            file.branches.len()
        )));
    }
    if file.images.len() != m {
        return Err(ModelError::Malformed(format!(
            "expected {m} images, found {}",
            file.images.len()
        )));
    }
    for b in &file.branches {
        if let Branch::Poly { coeffs } = b {
            if coeffs.is_empty() || coeffs.len() > 65 {
                return Err(ModelError::Malformed(
                    "poly branches must have 1..=65 coefficients".into(),
                ));
            }
            if coeffs.iter().any(|c| !c.is_finite()) {
                return Err(ModelError::Malformed("poly coefficients must be finite".into()));
            }
        }
    }
    for &h in &file.hole {
        if h == 0 || h > m {
            return Err(ModelError::Malformed(format!(
                "hole index {h} outside 1..={m}"
            )));
        }
    }
    Ok(())
}

/// An accepted open map: immutable after validation, all operations pure.
#[derive(Clone, Debug)]
pub struct OpenMapModel {
    partition: Partition,
    branches: Vec<Branch>,
    hole: BTreeSet<usize>,
    /// Declared image of each cell as cut-point indices `(a, b)`, meaning
    /// the closed interval `[q_a, q_b]`.
    image_cuts: Vec<(usize, usize)>,
    report: ValidationReport,
}

impl OpenMapModel {
    /// Validate and accept a model file.
    pub fn from_file(file: &ModelFile) -> Result<Self, ModelError> {
        let report = validate(file);
        if let Some(cause) = report.causes.first() {
            return Err(cause.clone());
        }
        let partition = Partition {
            cuts: file.cut_points.clone(),
        };
        let image_cuts = file
            .images
            .iter()
            .map(|im| {
                let a = partition.snap_cut(im[0], MARKOV_TOL).expect("validated");
                let b = partition.snap_cut(im[1], MARKOV_TOL).expect("validated");
                (a, b)
            })
            .collect();
        Ok(OpenMapModel {
            partition,
            branches: file.branches.clone(),
            hole: file.hole.iter().map(|&i| i - 1).collect(),
            image_cuts,
            report,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        Self::from_file(&ModelFile::from_json(text)?)
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn cell_count(&self) -> usize {
        self.partition.cell_count()
    }

    pub fn branch(&self, i: usize) -> &Branch {
        &self.branches[i]
    }

    pub fn is_hole(&self, i: usize) -> bool {
        self.hole.contains(&i)
    }

    pub fn hole_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.hole.iter().copied()
    }

    pub fn hole_count(&self) -> usize {
        self.hole.len()
    }

    /// Declared image of cell `i` as cut indices `(a, b)` for `[q_a, q_b]`.
    pub fn image_cuts(&self, i: usize) -> (usize, usize) {
        self.image_cuts[i]
    }

    pub fn class(&self) -> MapClass {
        self.report.class
    }

    pub fn report(&self) -> &ValidationReport {
        &self.report
    }

    /// Cell containing `x` (see [`Partition::locate`]).
    pub fn cell_of(&self, x: f64) -> usize {
        self.partition.locate(x)
    }

    /// One application of the open map: identity on the hole. The output is
    /// clamped to `[0, 1]` to guard against float drift at the boundary.
    pub fn step_open(&self, x: f64) -> f64 {
        let i = self.cell_of(x);
        if self.hole.contains(&i) {
            x
        } else {
            self.branches[i].eval(x).clamp(0.0, 1.0)
        }
    }

    /// `n`-th iterate of the open map at `x`.
    pub fn evaluate_open(&self, x: f64, n: usize) -> Result<f64, ModelError> {
        if !(0.0..=1.0).contains(&x) {
            return Err(ModelError::PointOutOfDomain(x));
        }
        let mut p = x;
        for _ in 0..n {
            let i = self.cell_of(p);
            if self.hole.contains(&i) {
                break;
            }
            p = self.branches[i].eval(p).clamp(0.0, 1.0);
        }
        Ok(p)
    }

    /// The cell `xi_i ∩ f^{-1}(xi_j)`, or `None` when it has no measure.
    ///
    /// Endpoints come from inverting the monotone branch at the cuts;
    /// the result is stored `(lo, hi]` regardless of branch orientation.
    pub fn cell_intersection(&self, i: usize, j: usize) -> Option<Cell> {
        let iv = self.intersection_interval(i, j, EMPTY_TOL)?;
        Some(Cell {
            interval: iv,
            label: format!("xi_{}", word_label(&[i, j], self.cell_count())),
        })
    }

    fn intersection_interval(&self, i: usize, j: usize, empty_tol: f64) -> Option<Interval> {
        let iv = self.partition.interval(i);
        let branch = &self.branches[i];
        let (img_lo, img_hi) = branch.image(iv.lo, iv.hi);
        let target = self.partition.interval(j);
        let y_lo = target.lo.max(img_lo);
        let y_hi = target.hi.min(img_hi);
        if y_hi - y_lo <= empty_tol {
            return None;
        }
        let x1 = branch.invert(y_lo, iv.lo, iv.hi, 1e-9)?;
        let x2 = branch.invert(y_hi, iv.lo, iv.hi, 1e-9)?;
        let (lo, hi) = if x1 <= x2 { (x1, x2) } else { (x2, x1) };
        let lo = lo.max(iv.lo);
        let hi = hi.min(iv.hi);
        if hi - lo <= empty_tol {
            return None;
        }
        Some(Interval::new(lo, hi))
    }

    /// The iterated-preimage cell of an itinerary word
    /// `xi_{i_0} ∩ f^{-1}(xi_{i_1}) ∩ ... ∩ f^{-t}(xi_{i_t})`, built by
    /// pulling the last cell back through each branch in turn. Uses the
    /// closed map (branches apply on hole cells too).
    pub fn path_cell(&self, word: &[usize]) -> Option<Cell> {
        if word.len() < 2 {
            return None;
        }
        let last = self.partition.interval(word[word.len() - 1]);
        let (mut c_lo, mut c_hi) = (last.lo, last.hi);
        for &i in word[..word.len() - 1].iter().rev() {
            let iv = self.partition.interval(i);
            let branch = &self.branches[i];
            let (img_lo, img_hi) = branch.image(iv.lo, iv.hi);
            let y_lo = c_lo.max(img_lo);
            let y_hi = c_hi.min(img_hi);
            if y_hi - y_lo <= PATH_EMPTY_TOL {
                return None;
            }
            let x1 = branch.invert(y_lo, iv.lo, iv.hi, 1e-9)?;
            let x2 = branch.invert(y_hi, iv.lo, iv.hi, 1e-9)?;
            let (lo, hi) = if x1 <= x2 { (x1, x2) } else { (x2, x1) };
            c_lo = lo.max(iv.lo);
            c_hi = hi.min(iv.hi);
            if c_hi - c_lo <= PATH_EMPTY_TOL {
                return None;
            }
        }
        Some(Cell {
            interval: Interval::new(c_lo, c_hi),
            label: format!("xi_{}", word_label(word, self.cell_count())),
        })
    }
}
