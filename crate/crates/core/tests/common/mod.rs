#![allow(dead_code)]

use rand::Rng;

/// Random expression that is smooth and well conditioned on `[-1, 1]^n`.
pub fn smooth_expr<R: Rng>(rng: &mut R, coords: &[&str], depth: u32) -> String {
    let leaf = |rng: &mut R| -> String {
        if rng.gen_bool(0.7) {
            coords[rng.gen_range(0..coords.len())].to_string()
        } else {
            format!("{:.3}", rng.gen_range(0.1..2.0))
        }
    };
    if depth == 0 {
        return leaf(rng);
    }
    let a = smooth_expr(rng, coords, depth - 1);
    let b = smooth_expr(rng, coords, depth - 1);
    match rng.gen_range(0..9) {
        0 => format!("({a}) + ({b})"),
        1 => format!("({a}) - ({b})"),
        2 => format!("({a}) * ({b})"),
        3 => format!("sin({a})"),
        4 => format!("cos({b})"),
        5 => format!("exp(0.3 * ({a}))"),
        6 => format!("({a}) / (2 + ({b})^2)"),
        7 => format!("({a})^2"),
        _ => format!("atan2({a}, 3 + ({b})^2)"),
    }
}

pub fn smooth_components<R: Rng>(rng: &mut R, coords: &[&str], len: usize) -> Vec<String> {
    (0..len).map(|_| smooth_expr(rng, coords, 2)).collect()
}

pub fn point<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}
