//! Real polynomial arithmetic on intervals: evaluation, differentiation,
//! root isolation, and inversion of monotone pieces.
//!
//! Root isolation recurses on the derivative: the real roots of `p'` split
//! `[lo, hi]` into monotone segments, and each segment holds at most one
//! root of `p`, found by bisection and polished with Newton steps.

/// Width below which a bracketing interval is considered resolved.
pub const ROOT_TOL: f64 = 1e-13;

/// Evaluate a polynomial given by ascending coefficients (Horner).
pub fn eval(coeffs: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for &c in coeffs.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

/// Coefficients of the derivative polynomial.
pub fn derivative(coeffs: &[f64]) -> Vec<f64> {
    if coeffs.len() <= 1 {
        return vec![0.0];
    }
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &c)| c * k as f64)
        .collect()
}

/// Drop trailing zero coefficients (exact zeros only).
fn trimmed(coeffs: &[f64]) -> &[f64] {
    let mut n = coeffs.len();
    while n > 1 && coeffs[n - 1] == 0.0 {
        n -= 1;
    }
    &coeffs[..n]
}

/// All real roots of `p` in `[lo, hi]`, ascending, deduplicated.
///
/// Roots where `p` touches zero without a sign change (even multiplicity)
/// are found through the derivative recursion as well: they are roots of
/// `p'` at which `p` evaluates to ~0.
pub fn real_roots_in(coeffs: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let p = trimmed(coeffs);
    let mut roots = Vec::new();
    if lo > hi {
        return roots;
    }
    let scale = coeff_scale(p, lo, hi);
    match p.len() {
        0 | 1 => {
            // Constant: either no roots or identically zero; report none.
        }
        2 => {
            let r = -p[0] / p[1];
            if r >= lo - ROOT_TOL && r <= hi + ROOT_TOL {
                roots.push(r.clamp(lo, hi));
            }
        }
        _ => {
            let crit = real_roots_in(&derivative(p), lo, hi);
            let mut nodes = Vec::with_capacity(crit.len() + 2);
            nodes.push(lo);
            nodes.extend(crit.iter().copied());
            nodes.push(hi);
            nodes.dedup_by(|a, b| (*a - *b).abs() <= ROOT_TOL);
            for w in nodes.windows(2) {
                let (a, b) = (w[0], w[1]);
                let (fa, fb) = (eval(p, a), eval(p, b));
                if fa.abs() <= 1e-14 * scale {
                    roots.push(a);
                }
                if fa * fb < 0.0 {
                    roots.push(bisect_newton(p, a, b, fa));
                }
            }
            let fh = eval(p, hi);
            if fh.abs() <= 1e-14 * scale {
                roots.push(hi);
            }
        }
    }
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() <= 10.0 * ROOT_TOL);
    roots
}

/// Magnitude scale of `p` on `[lo, hi]` for zero tests.
fn coeff_scale(coeffs: &[f64], lo: f64, hi: f64) -> f64 {
    let m = lo.abs().max(hi.abs()).max(1.0);
    let mut s: f64 = 0.0;
    let mut pw = 1.0;
    for &c in coeffs {
        s = s.max((c * pw).abs());
        pw *= m;
    }
    s.max(1e-300)
}

/// Root of `p` in `(a, b)` with `p(a)`, `p(b)` of opposite sign.
fn bisect_newton(coeffs: &[f64], mut a: f64, mut b: f64, fa: f64) -> f64 {
    let sign_a = fa.signum();
    for _ in 0..80 {
        let mid = 0.5 * (a + b);
        if b - a <= ROOT_TOL {
            return mid;
        }
        let fm = eval(coeffs, mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == sign_a {
            a = mid;
        } else {
            b = mid;
        }
    }
    let deriv = derivative(coeffs);
    let mut x = 0.5 * (a + b);
    for _ in 0..3 {
        let d = eval(&deriv, x);
        if d == 0.0 {
            break;
        }
        let step = eval(coeffs, x) / d;
        let next = x - step;
        if next.is_finite() && next >= a && next <= b {
            x = next;
        } else {
            break;
        }
    }
    x
}

/// Solve `p(x) = y` for `x` in `[a, b]` assuming `p` is monotone there.
///
/// `y` slightly outside the achieved range (within `slack`) is clamped to
/// the nearer endpoint. Returns `None` when `y` is farther outside.
pub fn invert_monotone(coeffs: &[f64], y: f64, a: f64, b: f64, slack: f64) -> Option<f64> {
    let (fa, fb) = (eval(coeffs, a), eval(coeffs, b));
    let (ylo, yhi) = if fa <= fb { (fa, fb) } else { (fb, fa) };
    if y < ylo - slack || y > yhi + slack {
        return None;
    }
    if y <= ylo {
        return Some(if fa <= fb { a } else { b });
    }
    if y >= yhi {
        return Some(if fa <= fb { b } else { a });
    }
    let shifted: Vec<f64> = {
        let mut c = coeffs.to_vec();
        c[0] -= y;
        c
    };
    Some(bisect_newton(&shifted, a, b, fa - y))
}
