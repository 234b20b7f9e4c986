use serde::{Deserialize, Serialize};

use crate::cells::{BiasInit, CellKind, CellParams};
use crate::error::{Error, Result};
use crate::numerics::{mean_singular_value, Rng};

/// Mean singular values of the input and state Jacobians at the zero fixed
/// point, and the two ways of combining them into a per-cell gain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub kind: CellKind,
    pub n: usize,
    pub mean_sv_j: f64,
    pub mean_sv_h: f64,
    /// `sqrt(s_J^2 + s_H^2)`: the two gradient terms uncorrelated.
    pub factor_uncorrelated: f64,
    /// `s_J + s_H`: the two terms perfectly correlated.
    pub factor_correlated: f64,
    pub trials: usize,
}

impl FixedPointReport {
    pub fn from_means(kind: CellKind, n: usize, trials: usize, s_j: f64, s_h: f64) -> Self {
        FixedPointReport {
            kind,
            n,
            mean_sv_j: s_j,
            mean_sv_h: s_h,
            factor_uncorrelated: s_j.hypot(s_h),
            factor_correlated: s_j + s_h,
            trials,
        }
    }

    pub fn csv_header() -> &'static str {
        "kind,n,trials,mean_sv_j,mean_sv_h,factor_uncorrelated,factor_correlated"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.kind,
            self.n,
            self.trials,
            self.mean_sv_j,
            self.mean_sv_h,
            self.factor_uncorrelated,
            self.factor_correlated
        )
    }
}

/// Averages the mean singular values of `J` and `H` at zero input and state
/// over `trials` draws of orthogonal weights with zero biases.
pub fn fixed_point_report(kind: CellKind, n: usize, trials: usize, rng: &mut Rng) -> Result<FixedPointReport> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!("fixed-point analysis needs n >= 2, got {n}")));
    }
    if trials == 0 {
        return Err(Error::InvalidConfig("fixed-point analysis needs at least one trial".into()));
    }
    let zero = vec![0.0; n];
    let c0 = kind.has_cell_state().then_some(zero.as_slice());
    let (mut sj, mut sh) = (0.0, 0.0);
    for _ in 0..trials {
        let p = CellParams::init(kind, n, n, 2, BiasInit::Zero, rng);
        let (j, h) = p.jacobians_at(&zero, &zero, c0)?;
        sj += mean_singular_value(&j)?;
        sh += mean_singular_value(&h)?;
    }
    let k = trials as f64;
    Ok(FixedPointReport::from_means(kind, n, trials, sj / k, sh / k))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_constants() {
        let cases = [
            (CellKind::Vrnn, 1.0, 1.0, 2f64.sqrt(), 2.0),
            (CellKind::Lstm, 0.25, 0.25, 0.125f64.sqrt(), 0.5),
            (CellKind::Star, 0.5, 0.5, 0.5f64.sqrt(), 1.0),
        ];
        for (kind, sj, sh, fu, fc) in cases {
            let r = fixed_point_report(kind, 32, 3, &mut Rng::new(1, 0)).unwrap();
            assert!((r.mean_sv_j - sj).abs() < 1e-9, "{kind}");
            assert!((r.mean_sv_h - sh).abs() < 1e-9, "{kind}");
            assert!((r.factor_uncorrelated - fu).abs() < 1e-9);
            assert!((r.factor_correlated - fc).abs() < 1e-9);
        }
    }

    #[test]
    fn factor_identities_and_ordering() {
        for kind in CellKind::ALL {
            let r = fixed_point_report(kind, 12, 2, &mut Rng::new(2, 0)).unwrap();
            assert_eq!(r.factor_uncorrelated.powi(2), r.mean_sv_j.hypot(r.mean_sv_h).powi(2));
            let lhs = r.factor_uncorrelated.powi(2);
            let rhs = r.mean_sv_j.powi(2) + r.mean_sv_h.powi(2);
            assert!((lhs - rhs).abs() <= 4.0 * f64::EPSILON * rhs);
            assert!(r.factor_correlated >= r.factor_uncorrelated);
            assert!(r.factor_uncorrelated >= r.mean_sv_j.max(r.mean_sv_h));
            assert!(r.mean_sv_j >= 0.0 && r.mean_sv_h >= 0.0);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(fixed_point_report(CellKind::Star, 1, 3, &mut Rng::new(0, 0)).is_err());
        assert!(fixed_point_report(CellKind::Star, 4, 0, &mut Rng::new(0, 0)).is_err());
    }
}
