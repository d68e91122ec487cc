//! Delayed-first-return sharpening: admissible sequences over a structural
//! set, the extended path-state index, reduced transition matrices, and the
//! tightened escape bounds they produce.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::escape::{self, EscapeSeries};
use crate::graph::{self, StructuralSet};
use crate::kernel::{self, KernelError};
use crate::model::{word_label, Cell, MapClass, OpenMapModel};

/// An itinerary word from a non-hole cell through complement vertices until
/// it first lands in the structural set, together with its realizing cell.
#[derive(Clone, Debug)]
pub struct AdmissibleSequence {
    /// 0-based cell indices `i_0 .. i_t`.
    pub word: Vec<usize>,
    pub cell: Cell,
}

impl AdmissibleSequence {
    /// The word length `t = |gamma|` (number of map applications).
    pub fn steps(&self) -> usize {
        self.word.len() - 1
    }

    pub fn label(&self, cell_count: usize) -> String {
        word_label(&self.word, cell_count)
    }
}

/// Enumerate the admissible sequences of a structural set: depth-first over
/// the open transition graph starting from every non-hole vertex, passing
/// only through complement vertices, stopping at the first vertex of the
/// set. Words whose realizing cell is empty are discarded; the result is in
/// lexicographic word order.
pub fn admissible_sequences(model: &OpenMapModel, set: &StructuralSet) -> Vec<AdmissibleSequence> {
    let g = graph::build_graph(model);
    let m = model.cell_count();
    let mut out = Vec::new();
    let mut word = Vec::new();
    for start in (0..m).filter(|&i| !model.is_hole(i)) {
        word.push(start);
        extend(model, &g, set, &mut word, &mut out);
        word.pop();
    }
    out.sort_by(|a, b| a.word.cmp(&b.word));
    out
}

fn extend(
    model: &OpenMapModel,
    g: &graph::TransitionGraph,
    set: &StructuralSet,
    word: &mut Vec<usize>,
    out: &mut Vec<AdmissibleSequence>,
) {
    let last = *word.last().unwrap();
    let successors: Vec<usize> = g.successors(last).collect();
    for j in successors {
        word.push(j);
        if set.contains(j) {
            if let Some(cell) = model.path_cell(word) {
                out.push(AdmissibleSequence {
                    word: word.clone(),
                    cell,
                });
            }
        } else {
            // complement vertices are never holes, and acyclicity bounds
            // the excursion length
            extend(model, g, set, word, out);
        }
        word.pop();
    }
}

/// The delayed-first-return system over a structural set: matrices indexed
/// by the base cells followed by the interior path states of each word of
/// length at least two.
#[derive(Clone, Debug)]
pub struct ReducedSystem {
    pub set: StructuralSet,
    pub sequences: Vec<AdmissibleSequence>,
    /// Index labels: "1".."m", then "423;1"-style path states in word
    /// order, interior position ascending.
    pub labels: Vec<String>,
    pub lower: DMatrix<f64>,
    pub upper: DMatrix<f64>,
    pub ones: DVector<f64>,
    pub hole_vector: DVector<f64>,
    pub exact: bool,
}

impl ReducedSystem {
    pub fn state_count(&self) -> usize {
        self.labels.len()
    }

    /// Text dump: the sequences with their cells, then both matrices.
    pub fn render(&self, precision: usize) -> String {
        let m = self.hole_count_base();
        let mut out = format!("structural set {}\n", self.set.label());
        for seq in &self.sequences {
            out.push_str(&format!(
                "  gamma = {:<8} |gamma| = {}  cell = ({:.6}, {:.6}]\n",
                seq.label(m),
                seq.len(),
                seq.cell.interval.lo,
                seq.cell.interval.hi,
            ));
        }
        out.push_str(&format!("state order: {}\n", self.labels.join(", ")));
        out.push_str("lower transition matrix:\n");
        out.push_str(&escape::format_matrix(&self.lower, &self.labels, precision));
        out.push_str("upper transition matrix:\n");
        out.push_str(&escape::format_matrix(&self.upper, &self.labels, precision));
        out
    }

    fn hole_count_base(&self) -> usize {
        // number of base cells = vertices of the underlying graph
        self.set.complement().len() + self.set.len()
    }
}

/// Build the reduced system. Length-1 words reuse the depth-1 extremization
/// over their cells, so reduced entries never loosen matched base entries;
/// longer words get unit chain entries through their interior states and a
/// composed-derivative extremum on the final step.
pub fn build_reduced(model: &OpenMapModel, set: &StructuralSet) -> Result<ReducedSystem, KernelError> {
    let m = model.cell_count();
    let sequences = admissible_sequences(model, set);

    // index layout: base cells, then interior states in word order
    let mut labels: Vec<String> = (1..=m).map(|i| i.to_string()).collect();
    let mut interior: BTreeMap<(Vec<usize>, usize), usize> = BTreeMap::new();
    for seq in &sequences {
        let t = seq.len();
        for k in 1..t {
            let idx = labels.len();
            labels.push(format!("{};{k}", seq.label(m)));
            interior.insert((seq.word.clone(), k), idx);
        }
    }
    let n = labels.len();

    let mut lower = DMatrix::zeros(n, n);
    let mut upper = DMatrix::zeros(n, n);
    for seq in &sequences {
        let t = seq.len();
        if t == 1 {
            let cell = model
                .cell_intersection(seq.word[0], seq.word[1])
                .expect("admissible length-1 words have nonempty cells");
            let (lo, hi) = kernel::extremize_inverse_derivative(model, cell.interval, 1)?;
            lower[(seq.word[0], seq.word[1])] = lo;
            upper[(seq.word[0], seq.word[1])] = hi;
        } else {
            let state = |k: usize| -> usize {
                match k {
                    0 => seq.word[0],
                    k if k == t => seq.word[t],
                    k => interior[&(seq.word.clone(), k)],
                }
            };
            for k in 1..t {
                lower[(state(k - 1), state(k))] = 1.0;
                upper[(state(k - 1), state(k))] = 1.0;
            }
            let (lo, hi) = kernel::extremize_inverse_derivative(model, seq.cell.interval, t)?;
            lower[(state(t - 1), state(t))] = lo;
            upper[(state(t - 1), state(t))] = hi;
        }
    }

    let ones = DVector::from_fn(n, |i, _| if i < m { 1.0 } else { 0.0 });
    let hole_vector = DVector::from_fn(n, |i, _| {
        if i < m && model.is_hole(i) {
            model.partition().measure(i)
        } else {
            0.0
        }
    });
    Ok(ReducedSystem {
        set: set.clone(),
        sequences,
        labels,
        lower,
        upper,
        ones,
        hole_vector,
        exact: model.class() == MapClass::Affine,
    })
}

/// Escape series of the reduced system. The sandwich guarantee places it
/// inside the unreduced bounds at every step.
pub fn improved_series(reduced: &ReducedSystem, n_max: usize) -> EscapeSeries {
    escape::series_from_parts(
        &reduced.lower,
        &reduced.upper,
        &reduced.ones,
        &reduced.hole_vector,
        n_max,
        reduced.exact,
    )
}

/// Gap comparison of one structural set against the unreduced bounds.
#[derive(Clone, Debug)]
pub struct SetComparison {
    pub set: StructuralSet,
    /// Total reduced gap `sum_n (x_upper - x_lower)`.
    pub reduced_gap: f64,
    pub unreduced_gap: f64,
    /// Steps at which the reduced interval is strictly inside.
    pub improved_steps: usize,
}

/// Comparison report over a list of structural sets.
#[derive(Clone, Debug)]
pub struct TighteningReport {
    pub comparisons: Vec<SetComparison>,
    /// Index into `comparisons` with the smallest reduced gap.
    pub best: usize,
    pub n_max: usize,
    /// All gaps vanish for piecewise-affine maps.
    pub exact: bool,
}

impl fmt::Display for TighteningReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "tightening over n <= {}:", self.n_max)?;
        for (k, c) in self.comparisons.iter().enumerate() {
            writeln!(
                f,
                "  {} gap {:.6e} vs unreduced {:.6e}, strictly tighter at {} steps{}",
                c.set.label(),
                c.reduced_gap,
                c.unreduced_gap,
                c.improved_steps,
                if k == self.best { "  <- best" } else { "" },
            )?;
        }
        if self.exact {
            writeln!(f, "  exact (affine map): all gaps are zero")?;
        }
        Ok(())
    }
}

/// Compare reduced against unreduced bounds for each candidate set.
pub fn compare(
    model: &OpenMapModel,
    sets: &[StructuralSet],
    n_max: usize,
) -> Result<TighteningReport, KernelError> {
    let pair = escape::build_matrices(model)?;
    let base = escape::escape_series(&pair, n_max);
    let unreduced_gap: f64 = base.rows.iter().map(|r| r.x_upper - r.x_lower).sum();
    let mut comparisons = Vec::with_capacity(sets.len());
    for set in sets {
        let reduced = build_reduced(model, set)?;
        let series = improved_series(&reduced, n_max);
        let reduced_gap: f64 = series.rows.iter().map(|r| r.x_upper - r.x_lower).sum();
        let improved_steps = series
            .rows
            .iter()
            .zip(&base.rows)
            .filter(|(r, b)| r.x_lower > b.x_lower || r.x_upper < b.x_upper)
            .count();
        comparisons.push(SetComparison {
            set: set.clone(),
            reduced_gap,
            unreduced_gap,
            improved_steps,
        });
    }
    let best = comparisons
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.reduced_gap.total_cmp(&b.reduced_gap))
        .map(|(k, _)| k)
        .unwrap_or(0);
    Ok(TighteningReport {
        comparisons,
        best,
        n_max,
        exact: model.class() == MapClass::Affine,
    })
}
