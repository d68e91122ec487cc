//! Browser bindings: thin JSON-string wrappers over the escape-statistics
//! library for the static demo page. Every export takes and returns JSON so
//! the page needs no generated types beyond the wasm-bindgen glue.

use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::wasm_bindgen;

use openmap::escape::{self, EscapeSeries};
use openmap::graph::{self, StructuralSet};
use openmap::model::OpenMapModel;
use openmap::oracle;
use openmap::reduction;
use openmap::{fixtures, kernel};

/// The bundled example models keyed by name.
#[wasm_bindgen]
pub fn builtin_models() -> String {
    json!({
        "tent": fixtures::tent_file(),
        "cubic": fixtures::cubic_file(),
        "shift": fixtures::two_cell_shift_file(),
    })
    .to_string()
}

fn fail(message: impl std::fmt::Display) -> String {
    json!({ "ok": false, "error": message.to_string() }).to_string()
}

fn load(model_json: &str) -> Result<OpenMapModel, String> {
    OpenMapModel::from_json(model_json).map_err(|e| e.to_string())
}

fn parse_set(model: &OpenMapModel, selector: &str) -> Result<Option<StructuralSet>, String> {
    if selector.trim().is_empty() {
        return Ok(None);
    }
    let vertices = graph::parse_selector(selector)?;
    let g = graph::build_graph(model);
    StructuralSet::new(&g, &vertices)
        .map(Some)
        .map_err(|e| e.to_string())
}

fn matrix_rows(m: &openmap::nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect()
}

/// Validation report, transition graph, bound matrices, spectra, and the
/// enumerated structural sets of a model.
#[wasm_bindgen]
pub fn analyze(model_json: &str) -> String {
    let model = match load(model_json) {
        Ok(m) => m,
        Err(e) => return fail(e),
    };
    let g = graph::build_graph(&model);
    let pair = match escape::build_matrices(&model) {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    let classes = escape::classify(&pair);
    let spectrum = |m: &openmap::nalgebra::DMatrix<f64>| -> Vec<[f64; 2]> {
        kernel::spectral(m)
            .map(|d| d.eigenvalues.iter().map(|l| [l.re, l.im]).collect())
            .unwrap_or_default()
    };
    let sets: Vec<serde_json::Value> = graph::enumerate_structural_sets(&g, 32)
        .iter()
        .map(|s| {
            json!({
                "label": s.label(),
                "selector": s
                    .vertices()
                    .iter()
                    .map(|v| format!("v{}", v + 1))
                    .collect::<Vec<_>>()
                    .join(","),
            })
        })
        .collect();
    json!({
        "ok": true,
        "report": model.report().render(),
        "accepted": true,
        "exact": pair.exact,
        "dot": g.to_dot(),
        "cut_points": model.partition().cuts(),
        "hole": model.hole_indices().map(|i| i + 1).collect::<Vec<_>>(),
        "lower": matrix_rows(&pair.lower),
        "upper": matrix_rows(&pair.upper),
        "spectrum_lower": spectrum(&pair.lower),
        "spectrum_upper": spectrum(&pair.upper),
        "class_lower": classes.lower.to_string(),
        "class_upper": classes.upper.to_string(),
        "structural_sets": sets,
    })
    .to_string()
}

#[derive(Serialize)]
struct SeriesPoint {
    n: usize,
    x_lower: f64,
    x_upper: f64,
    y_lower: f64,
    y_upper: f64,
    p_lower: f64,
    p_upper: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    x_lower_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    x_upper_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    y_lower_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    y_upper_s: Option<f64>,
}

fn clampv(v: f64, clamp: bool) -> f64 {
    if clamp {
        v.clamp(0.0, 1.0)
    } else {
        v
    }
}

fn series_points(
    base: &EscapeSeries,
    reduced: Option<&EscapeSeries>,
    clamp: bool,
) -> Vec<SeriesPoint> {
    base.rows
        .iter()
        .enumerate()
        .map(|(n, r)| {
            let red = reduced.map(|s| &s.rows[n]);
            SeriesPoint {
                n,
                x_lower: clampv(r.x_lower, clamp),
                x_upper: clampv(r.x_upper, clamp),
                y_lower: clampv(r.y_lower, clamp),
                y_upper: clampv(r.y_upper, clamp),
                p_lower: clampv(r.p_lower(), clamp),
                p_upper: clampv(r.p_upper(), clamp),
                x_lower_s: red.map(|s| clampv(s.x_lower, clamp)),
                x_upper_s: red.map(|s| clampv(s.x_upper, clamp)),
                y_lower_s: red.map(|s| clampv(s.y_lower, clamp)),
                y_upper_s: red.map(|s| clampv(s.y_upper, clamp)),
            }
        })
        .collect()
}

/// Escape series rows, with sharpened columns when a structural-set
/// selector such as `"v1,v3,v4"` is given.
#[wasm_bindgen]
pub fn series(model_json: &str, n_max: usize, selector: &str, clamp: bool) -> String {
    let model = match load(model_json) {
        Ok(m) => m,
        Err(e) => return fail(e),
    };
    let n_max = n_max.min(500);
    let pair = match escape::build_matrices(&model) {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    let base = escape::escape_series(&pair, n_max);
    let reduced = match parse_set(&model, selector) {
        Ok(Some(set)) => match reduction::build_reduced(&model, &set) {
            Ok(red) => Some(reduction::improved_series(&red, n_max)),
            Err(e) => return fail(e),
        },
        Ok(None) => None,
        Err(e) => return fail(e),
    };
    json!({
        "ok": true,
        "exact": base.exact,
        "rows": series_points(&base, reduced.as_ref(), clamp),
    })
    .to_string()
}

/// Per-cell polylines of the open map for plotting: hole cells sample the
/// identity, others their branch.
#[wasm_bindgen]
pub fn map_curve(model_json: &str, samples_per_cell: usize) -> String {
    let model = match load(model_json) {
        Ok(m) => m,
        Err(e) => return fail(e),
    };
    let k = samples_per_cell.clamp(2, 512);
    let mut pieces = Vec::new();
    for i in 0..model.cell_count() {
        let iv = model.partition().interval(i);
        let mut xs = Vec::with_capacity(k);
        let mut ys = Vec::with_capacity(k);
        for s in 0..k {
            let x = iv.lo + (iv.hi - iv.lo) * s as f64 / (k - 1) as f64;
            let y = if model.is_hole(i) {
                x
            } else {
                model.branch(i).eval(x).clamp(0.0, 1.0)
            };
            xs.push(x);
            ys.push(y);
        }
        pieces.push(json!({ "hole": model.is_hole(i), "xs": xs, "ys": ys }));
    }
    json!({ "ok": true, "cut_points": model.partition().cuts(), "pieces": pieces }).to_string()
}

/// Direct and delayed orbits of a starting point, with first-entry steps.
#[wasm_bindgen]
pub fn orbit(model_json: &str, selector: &str, x0: f64, steps: usize) -> String {
    let model = match load(model_json) {
        Ok(m) => m,
        Err(e) => return fail(e),
    };
    if !(0.0..=1.0).contains(&x0) {
        return fail("starting point must lie in [0, 1]");
    }
    let steps = steps.min(500);
    let mut direct = Vec::with_capacity(steps + 1);
    let mut p = x0;
    direct.push(p);
    for _ in 0..steps {
        p = model.step_open(p);
        direct.push(p);
    }
    let direct_escape = oracle::first_entry_direct(&model, x0, steps);
    let (delayed, delayed_escape) = match parse_set(&model, selector) {
        Ok(Some(set)) => (
            Some(oracle::delayed_orbit(&model, &set, x0, steps)),
            oracle::delayed_first_entry(&model, &set, x0, steps),
        ),
        Ok(None) => (None, None),
        Err(e) => return fail(e),
    };
    json!({
        "ok": true,
        "direct": direct,
        "direct_escape": direct_escape,
        "delayed": delayed,
        "delayed_escape": delayed_escape,
    })
    .to_string()
}
