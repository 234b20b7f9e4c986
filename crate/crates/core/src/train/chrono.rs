use crate::numerics::Rng;

/// Chrono gate-bias initialization: `b = -ln(u)`, `u ~ U[1, t_max - 1]`.
///
/// Gates fed this bias start small, so a cell that weights its candidate by
/// the gate keeps its memory over horizons up to `t_max`. Retention gates
/// (LSTM forget) take the negated values.
pub fn chrono_bias_init(n: usize, t_max: usize, rng: &mut Rng) -> Vec<f64> {
    assert!(t_max >= 2, "chrono initialization needs t_max >= 2");
    let hi = (t_max - 1) as f64;
    (0..n)
        .map(|_| {
            let u = rng.uniform_range(1.0, hi);
            // -ln(1) would be -0.0
            if u == 1.0 {
                0.0
            } else {
                -u.ln()
            }
        })
        .collect()
}
