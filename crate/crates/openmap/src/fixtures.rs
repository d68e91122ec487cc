//! Bundled example models and a seeded random-model generator.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{Branch, ModelFile, OpenMapModel};

/// Tent map on the quarter partition with the first cell as hole.
pub fn tent_file() -> ModelFile {
    ModelFile {
        cut_points: vec![0.0, 0.25, 0.5, 0.75, 1.0],
        branches: vec![
            Branch::Affine { slope: 2.0, intercept: 0.0 },
            Branch::Affine { slope: 2.0, intercept: 0.0 },
            Branch::Affine { slope: -2.0, intercept: 2.0 },
            Branch::Affine { slope: -2.0, intercept: 2.0 },
        ],
        hole: vec![1],
        images: vec![[0.0, 0.5], [0.5, 1.0], [0.5, 1.0], [0.0, 0.5]],
    }
}

pub fn tent() -> OpenMapModel {
    OpenMapModel::from_file(&tent_file()).expect("tent fixture is valid")
}

/// Cubic analogue of the tent map: `11x/2 - 21x^2 + 28x^3` on the left half,
/// mirrored on the right. Same partition, images, and hole as the tent.
pub fn cubic_file() -> ModelFile {
    // The mirror p(1-x) expands exactly in binary floats.
    let left = vec![0.0, 5.5, -21.0, 28.0];
    let right = vec![12.5, -47.5, 63.0, -28.0];
    ModelFile {
        cut_points: vec![0.0, 0.25, 0.5, 0.75, 1.0],
        branches: vec![
            Branch::Poly { coeffs: left.clone() },
            Branch::Poly { coeffs: left },
            Branch::Poly { coeffs: right.clone() },
            Branch::Poly { coeffs: right },
        ],
        hole: vec![1],
        images: vec![[0.0, 0.5], [0.5, 1.0], [0.5, 1.0], [0.0, 0.5]],
    }
}

pub fn cubic() -> OpenMapModel {
    OpenMapModel::from_file(&cubic_file()).expect("cubic fixture is valid")
}

/// Two-cell right shift: everything escapes by step 1.
pub fn two_cell_shift_file() -> ModelFile {
    ModelFile {
        cut_points: vec![0.0, 0.5, 1.0],
        branches: vec![
            Branch::Affine { slope: 1.0, intercept: 0.5 },
            Branch::Affine { slope: 1.0, intercept: -0.5 },
        ],
        hole: vec![1],
        images: vec![[0.5, 1.0], [0.0, 0.5]],
    }
}

pub fn two_cell_shift() -> OpenMapModel {
    OpenMapModel::from_file(&two_cell_shift_file()).expect("shift fixture is valid")
}

/// A random accepted polynomial Markov model, deterministic in `seed`.
///
/// Branches are monotone cubics `y_lo + span * phi(u)` with
/// `phi(u) = u + a*u*(1-u)*(u-b)`, `|a| <= 0.45`, which keeps
/// `phi' >= 0.55` so monotonicity and the derivative floor hold by
/// construction. Images span one or two cells so cylinder counts stay
/// small under oracle enumeration.
pub fn seeded_polynomial_model(seed: u64) -> ModelFile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.gen_range(3..=6usize);

    // interior cut points with a minimum gap of 0.05
    let cuts = loop {
        let mut interior: Vec<f64> = (0..m - 1).map(|_| rng.gen_range(0.06..0.94)).collect();
        interior.sort_by(f64::total_cmp);
        let mut all = vec![0.0];
        all.extend(interior);
        all.push(1.0);
        if all.windows(2).all(|w| w[1] - w[0] >= 0.05) {
            break all;
        }
    };

    let hole_count = rng.gen_range(1..=((m - 1) / 2).max(1));
    let mut hole: Vec<usize> = Vec::new();
    while hole.len() < hole_count {
        let h = rng.gen_range(1..=m);
        if !hole.contains(&h) {
            hole.push(h);
        }
    }
    hole.sort_unstable();

    let mut branches = Vec::with_capacity(m);
    let mut images = Vec::with_capacity(m);
    for i in 0..m {
        let (a, b) = (cuts[i], cuts[i + 1]);
        let span_cells = rng.gen_range(1..=2usize);
        let j = rng.gen_range(0..=m - span_cells);
        let (y_lo, y_hi) = (cuts[j], cuts[j + span_cells]);
        let alpha = rng.gen_range(-0.45..0.45);
        let beta = rng.gen_range(0.0..1.0);
        let increasing = rng.gen_bool(0.5);
        branches.push(shaped_branch(a, b, y_lo, y_hi, alpha, beta, increasing));
        images.push([y_lo, y_hi]);
    }

    ModelFile {
        cut_points: cuts,
        branches,
        hole,
        images,
    }
}

/// Expand `y_lo + (y_hi-y_lo) * phi((x-a)/(b-a))` (or its decreasing mirror)
/// into ascending polynomial coefficients.
fn shaped_branch(a: f64, b: f64, y_lo: f64, y_hi: f64, alpha: f64, beta: f64, increasing: bool) -> Branch {
    // phi(u) = (1 - alpha*beta) u + alpha(1+beta) u^2 - alpha u^3
    let phi = [
        0.0,
        1.0 - alpha * beta,
        alpha * (1.0 + beta),
        -alpha,
    ];
    let w = b - a;
    let in_x = compose_affine(&phi, 1.0 / w, -a / w);
    let span = y_hi - y_lo;
    let coeffs: Vec<f64> = if increasing {
        let mut c: Vec<f64> = in_x.iter().map(|v| v * span).collect();
        c[0] += y_lo;
        c
    } else {
        let mut c: Vec<f64> = in_x.iter().map(|v| -v * span).collect();
        c[0] += y_hi;
        c
    };
    Branch::Poly { coeffs }
}

/// Coefficients of `p(s*x + t)` given ascending coefficients of `p(u)`.
fn compose_affine(coeffs: &[f64], s: f64, t: f64) -> Vec<f64> {
    let mut result = vec![*coeffs.last().unwrap()];
    for &c in coeffs.iter().rev().skip(1) {
        // result = result * (s x + t) + c
        let mut next = vec![0.0; result.len() + 1];
        for (k, &r) in result.iter().enumerate() {
            next[k + 1] += r * s;
            next[k] += r * t;
        }
        next[0] += c;
        result = next;
    }
    result
}
