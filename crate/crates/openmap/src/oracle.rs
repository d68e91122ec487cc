//! Independent ground truth: exact cylinder-measure escape, seeded Monte
//! Carlo, and the delayed-first-return orbit simulator.
//!
//! The exact oracle works purely with interval geometry (itinerary words
//! and their preimage cells), so it shares no code path with the matrix
//! series it is used to check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{self, StructuralSet};
use crate::model::OpenMapModel;

/// Cylinder enumeration is exponential in depth; refuse beyond this.
pub const MAX_EXACT_DEPTH: usize = 14;

#[derive(Clone, Debug, thiserror::Error)]
pub enum OracleError {
    #[error("exact escape depth {0} exceeds the cap of {MAX_EXACT_DEPTH}")]
    DepthTooLarge(usize),
}

/// Exact per-step escape measures.
#[derive(Clone, Debug)]
pub struct ExactEscape {
    /// Measure escaping exactly at step `n`.
    pub x: Vec<f64>,
    /// Measure escaped by step `n` (cumulative).
    pub y: Vec<f64>,
}

/// Sum the Lebesgue measures of all itinerary cylinders that avoid the hole
/// until entering it at the final step. Words are enumerated over the open
/// transition graph; each terminal word's cell is built by certified branch
/// inversion.
pub fn exact_escape_measure(
    model: &OpenMapModel,
    n_max: usize,
) -> Result<ExactEscape, OracleError> {
    if n_max > MAX_EXACT_DEPTH {
        return Err(OracleError::DepthTooLarge(n_max));
    }
    let g = graph::build_graph(model);
    let m = model.cell_count();
    let mut x = vec![0.0; n_max + 1];
    x[0] = model
        .hole_indices()
        .map(|i| model.partition().measure(i))
        .sum();
    if n_max > 0 {
        let mut word = Vec::with_capacity(n_max + 1);
        for start in (0..m).filter(|&i| !model.is_hole(i)) {
            word.push(start);
            collect_escapes(model, &g, &mut word, n_max, &mut x);
            word.pop();
        }
    }
    let mut y = Vec::with_capacity(n_max + 1);
    let mut acc = 0.0;
    for &v in &x {
        acc += v;
        y.push(acc);
    }
    Ok(ExactEscape { x, y })
}

fn collect_escapes(
    model: &OpenMapModel,
    g: &graph::TransitionGraph,
    word: &mut Vec<usize>,
    n_max: usize,
    x: &mut [f64],
) {
    let len = word.len(); // prefix of non-hole letters
    let last = *word.last().unwrap();
    let successors: Vec<usize> = g.successors(last).collect();
    for j in successors {
        if model.is_hole(j) {
            word.push(j);
            if let Some(cell) = model.path_cell(word) {
                x[len] += cell.interval.measure();
            }
            word.pop();
        } else if len < n_max {
            word.push(j);
            collect_escapes(model, g, word, n_max, x);
            word.pop();
        }
    }
}

/// Monte Carlo first-entry estimates with standard errors.
#[derive(Clone, Debug)]
pub struct MonteCarloEscape {
    pub samples: usize,
    /// Estimated measure escaping exactly at each step.
    pub estimates: Vec<f64>,
    /// Binomial standard error per step.
    pub stderr: Vec<f64>,
}

/// Uniform i.i.d. points iterated under the open map; deterministic in the
/// seed. Equivalent to [`monte_carlo_escape_sharded`] with one shard.
pub fn monte_carlo_escape(
    model: &OpenMapModel,
    samples: usize,
    n_max: usize,
    seed: u64,
) -> MonteCarloEscape {
    monte_carlo_escape_sharded(model, samples, n_max, seed, 1)
}

/// Sharded variant: shard `k` draws from the ChaCha stream `k + 1` of the
/// same seed, so a fixed `(seed, shards)` pair gives identical estimates no
/// matter how shards are scheduled. Samples split evenly with the remainder
/// on the leading shards.
pub fn monte_carlo_escape_sharded(
    model: &OpenMapModel,
    samples: usize,
    n_max: usize,
    seed: u64,
    shards: usize,
) -> MonteCarloEscape {
    if samples == 0 {
        return MonteCarloEscape {
            samples: 0,
            estimates: Vec::new(),
            stderr: Vec::new(),
        };
    }
    let shards = shards.max(1);
    let mut counts = vec![0u64; n_max + 1];
    let base = samples / shards;
    let rem = samples % shards;
    for shard in 0..shards {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(shard as u64 + 1);
        let quota = base + usize::from(shard < rem);
        for _ in 0..quota {
            let x0 = 1.0 - rng.gen::<f64>(); // uniform on (0, 1]
            if let Some(n) = first_entry_direct(model, x0, n_max) {
                counts[n] += 1;
            }
        }
    }
    let n = samples as f64;
    let estimates: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let stderr = estimates
        .iter()
        .map(|&p| (p * (1.0 - p) / n).sqrt())
        .collect();
    MonteCarloEscape {
        samples,
        estimates,
        stderr,
    }
}

/// First `n <= n_max` with the orbit in the hole, if any.
pub fn first_entry_direct(model: &OpenMapModel, x: f64, n_max: usize) -> Option<usize> {
    let mut p = x;
    for n in 0..=n_max {
        if model.is_hole(model.cell_of(p)) {
            return Some(n);
        }
        p = model.step_open(p);
    }
    None
}

/// Length of the itinerary word of `x`: the first `k > 0` with the orbit in
/// the structural-set cells. Bounded because the complement is acyclic.
fn word_length(model: &OpenMapModel, set: &StructuralSet, x: f64) -> usize {
    let cap = 2 * model.cell_count() + 2;
    let mut p = model.step_open(x);
    for k in 1..=cap {
        if set.contains(model.cell_of(p)) {
            return k;
        }
        p = model.step_open(p);
    }
    unreachable!("structural-set complement admits no long excursions");
}

/// Orbit of the delayed first return map: a point outside the hole sits
/// `|gamma(x)| - 1` extra steps, then jumps by the `|gamma(x)|`-th iterate;
/// hole points are fixed forever.
///
/// The delay is tracked as a word-position state machine rather than by
/// comparing point histories, which is equivalent and avoids float-equality
/// pitfalls.
pub fn delayed_orbit(
    model: &OpenMapModel,
    set: &StructuralSet,
    x0: f64,
    steps: usize,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(steps + 1);
    out.push(x0);
    let mut cur = x0;
    let mut hole = model.is_hole(model.cell_of(cur));
    let mut remaining = if hole { 0 } else { word_length(model, set, cur) };
    let mut served = 1;
    for _ in 0..steps {
        if hole {
            out.push(cur);
            continue;
        }
        if served < remaining {
            served += 1;
        } else {
            for _ in 0..remaining {
                cur = model.step_open(cur);
            }
            served = 1;
            hole = model.is_hole(model.cell_of(cur));
            if !hole {
                remaining = word_length(model, set, cur);
            }
        }
        out.push(cur);
    }
    out
}

/// First delayed-orbit index landing in the hole, streaming.
pub fn delayed_first_entry(
    model: &OpenMapModel,
    set: &StructuralSet,
    x: f64,
    n_max: usize,
) -> Option<usize> {
    if model.is_hole(model.cell_of(x)) {
        return Some(0);
    }
    let mut cur = x;
    let mut remaining = word_length(model, set, cur);
    let mut served = 1;
    for n in 1..=n_max {
        if served < remaining {
            served += 1;
            continue;
        }
        for _ in 0..remaining {
            cur = model.step_open(cur);
        }
        served = 1;
        if model.is_hole(model.cell_of(cur)) {
            return Some(n);
        }
        remaining = word_length(model, set, cur);
    }
    None
}

/// One escape-time disagreement between the open map and its delayed first
/// return map.
#[derive(Clone, Copy, Debug)]
pub struct EscapeMismatch {
    pub point: f64,
    pub direct: Option<usize>,
    pub delayed: Option<usize>,
}

/// Result of the escape-time equality check.
#[derive(Clone, Debug)]
pub struct Lemma1Report {
    pub samples: usize,
    pub n_max: usize,
    pub mismatches: Vec<EscapeMismatch>,
}

impl Lemma1Report {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Sample points uniformly and compare first-entry times of the direct and
/// delayed orbits; they must agree exactly for every structural set.
pub fn lemma1_check(
    model: &OpenMapModel,
    set: &StructuralSet,
    samples: usize,
    n_max: usize,
    seed: u64,
) -> Lemma1Report {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = Vec::new();
    for _ in 0..samples {
        let x = 1.0 - rng.gen::<f64>();
        let direct = first_entry_direct(model, x, n_max);
        let delayed = delayed_first_entry(model, set, x, n_max);
        if direct != delayed {
            mismatches.push(EscapeMismatch {
                point: x,
                direct,
                delayed,
            });
        }
    }
    Lemma1Report {
        samples,
        n_max,
        mismatches,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::graph::build_graph;
    use approx::assert_abs_diff_eq;

    fn structural(model: &OpenMapModel, vertices: &[usize]) -> StructuralSet {
        StructuralSet::new(&build_graph(model), vertices).unwrap()
    }

    #[test]
    fn tent_exact_measures() {
        let oracle = exact_escape_measure(&fixtures::tent(), 3).unwrap();
        let want = [0.25, 0.125, 0.125, 0.09375];
        for (got, w) in oracle.x.iter().zip(want) {
            assert_abs_diff_eq!(*got, w, epsilon = 1e-13);
        }
        assert_abs_diff_eq!(oracle.y[3], 0.59375, epsilon = 1e-13);
    }

    #[test]
    fn oracle_matches_matrix_series_for_affine_maps() {
        for model in [fixtures::tent(), fixtures::two_cell_shift()] {
            let oracle = exact_escape_measure(&model, 12).unwrap();
            let pair = crate::escape::build_matrices(&model).unwrap();
            let series = crate::escape::escape_series(&pair, 12);
            for n in 0..=12 {
                assert_abs_diff_eq!(oracle.x[n], series.rows[n].x_lower, epsilon = 1e-10);
                assert_abs_diff_eq!(oracle.y[n], series.rows[n].y_lower, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn empty_hole_never_escapes() {
        let mut file = fixtures::tent_file();
        file.hole.clear();
        let model = OpenMapModel::from_file(&file).unwrap();
        let oracle = exact_escape_measure(&model, 6).unwrap();
        assert!(oracle.x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shift_escapes_in_one_step() {
        let oracle = exact_escape_measure(&fixtures::two_cell_shift(), 4).unwrap();
        assert_eq!(oracle.x[0], 0.5);
        assert_eq!(oracle.x[1], 0.5);
        assert_eq!(oracle.x[2], 0.0);
        assert_eq!(oracle.y[1], 1.0);
    }

    #[test]
    fn depth_cap_is_enforced() {
        assert!(matches!(
            exact_escape_measure(&fixtures::tent(), 15),
            Err(OracleError::DepthTooLarge(15))
        ));
    }

    #[test]
    fn monte_carlo_is_deterministic_and_accurate() {
        let model = fixtures::tent();
        let a = monte_carlo_escape(&model, 100_000, 5, 42);
        let b = monte_carlo_escape(&model, 100_000, 5, 42);
        assert_eq!(a.estimates, b.estimates);
        let exact = exact_escape_measure(&model, 5).unwrap();
        for n in 0..=5 {
            let diff = (a.estimates[n] - exact.x[n]).abs();
            assert!(
                diff <= 5.0 * a.stderr[n].max(1e-6),
                "n={n}: {diff} vs sigma {}",
                a.stderr[n]
            );
        }
        let sharded = monte_carlo_escape_sharded(&model, 100_000, 5, 42, 4);
        let again = monte_carlo_escape_sharded(&model, 100_000, 5, 42, 4);
        assert_eq!(sharded.estimates, again.estimates);
    }

    #[test]
    fn monte_carlo_with_no_samples_is_empty() {
        let out = monte_carlo_escape(&fixtures::tent(), 0, 5, 1);
        assert!(out.estimates.is_empty());
        assert!(out.stderr.is_empty());
    }

    #[test]
    fn delayed_orbit_examples() {
        let model = fixtures::cubic();
        let set = structural(&model, &[0, 2, 3]);
        // a point whose word is 424 sits one extra step then jumps by g^2
        let cell = model.path_cell(&[3, 1, 3]).unwrap().interval;
        let x0 = cell.midpoint();
        let orbit = delayed_orbit(&model, &set, x0, 2);
        assert_eq!(orbit[1], x0);
        let g2 = model.evaluate_open(x0, 2).unwrap();
        assert_eq!(orbit[2], g2);
        // hole points stay fixed
        let frozen = delayed_orbit(&model, &set, 0.1, 4);
        assert!(frozen.iter().all(|&v| v == 0.1));
        // a word of length one moves immediately
        let cell41 = model.path_cell(&[3, 0]).unwrap().interval;
        let x1 = cell41.midpoint();
        let orbit = delayed_orbit(&model, &set, x1, 1);
        assert_eq!(orbit[1], model.step_open(x1));
    }

    #[test]
    fn delay_lengths_match_word_lengths() {
        let model = fixtures::cubic();
        let set = structural(&model, &[0, 2, 3]);
        // group consecutive equal points; each full group repeats exactly
        // |gamma| times before the jump
        let x0 = model.path_cell(&[3, 1, 3]).unwrap().interval.midpoint();
        let orbit = delayed_orbit(&model, &set, x0, 30);
        let mut k = 0;
        while k < orbit.len() {
            let v = orbit[k];
            let mut run = 1;
            while k + run < orbit.len() && orbit[k + run] == v {
                run += 1;
            }
            if model.is_hole(model.cell_of(v)) {
                break;
            }
            if k + run < orbit.len() {
                assert_eq!(run, word_length(&model, &set, v), "at index {k}");
            }
            k += run;
        }
    }

    #[test]
    fn lemma1_holds_on_fixture_models() {
        for model in [fixtures::tent(), fixtures::cubic()] {
            let g = build_graph(&model);
            for set in graph::enumerate_structural_sets(&g, 16) {
                let report = lemma1_check(&model, &set, 2_000, 100, 9);
                assert!(
                    report.passed(),
                    "set {} mismatches {:?}",
                    set.label(),
                    &report.mismatches[..report.mismatches.len().min(3)]
                );
            }
        }
    }
}
