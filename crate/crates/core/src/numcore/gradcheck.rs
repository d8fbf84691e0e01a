//! Central finite-difference gradient checking.

use super::params::Params;
use super::rng::SplitMix64;

/// Parameters up to this size are checked in full; larger ones are sampled.
pub const FULL_CHECK_LIMIT: usize = 256;

/// Absolute floor in the relative-error denominator.
pub const REL_ERR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct CoordError {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst: Option<CoordError>,
    pub checked: usize,
    /// Coordinates where a perturbation crossed a kink (ReLU boundary, max
    /// switch) at both the nominal and the reduced step; excluded from the max.
    pub kinks_skipped: usize,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tol
    }

    pub fn worst_param(&self) -> Option<&str> {
        self.worst.as_ref().map(|w| w.param.as_str())
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Compare `analytic` gradients with `(f(w+h) - f(w-h)) / 2h`.
///
/// `f` returns the loss and a branch signature (see
/// [`Tape::branch_signature`](super::tape::Tape::branch_signature)); closures
/// over smooth functions may return a constant signature. When a perturbed
/// evaluation lands on a different smooth piece the step is retried at `h/10`
/// and, failing that, the coordinate is skipped and counted.
pub fn grad_check<F>(
    mut f: F,
    params: &Params<f64>,
    analytic: &[Vec<f64>],
    h: f64,
    tol: f64,
    seed: u64,
) -> GradCheckReport
where
    F: FnMut(&Params<f64>) -> (f64, u64),
{
    let mut rng = SplitMix64::new(seed);
    let mut work = params.clone();
    let (_, base_sig) = f(&work);
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        checked: 0,
        kinks_skipped: 0,
        tol,
    };
    for (pi, name) in params.names().iter().enumerate() {
        let n = params.tensors()[pi].len();
        let coords: Vec<usize> = if n <= FULL_CHECK_LIMIT {
            (0..n).collect()
        } else {
            (0..FULL_CHECK_LIMIT).map(|_| rng.below(n)).collect()
        };
        for idx in coords {
            let orig = work.tensors()[pi].data()[idx];
            let mut numeric = None;
            for step in [h, h / 10.0] {
                work.tensors_mut()[pi].data_mut()[idx] = orig + step;
                let (fp, sp) = f(&work);
                work.tensors_mut()[pi].data_mut()[idx] = orig - step;
                let (fm, sm) = f(&work);
                work.tensors_mut()[pi].data_mut()[idx] = orig;
                if sp == base_sig && sm == base_sig {
                    numeric = Some((fp - fm) / (2.0 * step));
                    break;
                }
            }
            let Some(numeric) = numeric else {
                report.kinks_skipped += 1;
                continue;
            };
            let a = analytic[pi][idx];
            let e = relative_error(a, numeric);
            report.checked += 1;
            if report.worst.is_none() || e > report.max_rel_err {
                report.max_rel_err = e;
                report.worst = Some(CoordError {
                    param: name.clone(),
                    index: idx,
                    analytic: a,
                    numeric,
                    rel_err: e,
                });
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::tensor::Tensor;

    #[test]
    fn quadratic() {
        let mut p = Params::new();
        p.insert("w", Tensor::scalar(3.0));
        let f = |p: &Params<f64>| {
            let w = p.tensors()[0].data()[0];
            (w * w, 0)
        };
        let r = grad_check(f, &p, &[vec![6.0]], 1e-5, 1e-6, 0);
        assert!(r.passed());
        assert_eq!(r.checked, 1);
        assert!(r.max_rel_err < 1e-9);
    }

    #[test]
    fn corrupted_gradient_is_flagged() {
        let mut p = Params::new();
        p.insert("a", Tensor::from_f64(&[2], &[1.0, 2.0]).unwrap());
        p.insert("b", Tensor::from_f64(&[2], &[-1.0, 0.5]).unwrap());
        // f = sum(a^2) + sum(b^3)
        let f = |p: &Params<f64>| {
            let a: f64 = p.tensors()[0].data().iter().map(|x| x * x).sum();
            let b: f64 = p.tensors()[1].data().iter().map(|x| x * x * x).sum();
            (a + b, 0)
        };
        let good = vec![vec![2.0, 4.0], vec![3.0, 0.75]];
        assert!(grad_check(f, &p, &good, 1e-5, 1e-6, 0).passed());
        let bad = vec![vec![2.0, 4.0], vec![3.0, 1.5]];
        let r = grad_check(f, &p, &bad, 1e-5, 1e-6, 0);
        assert!(!r.passed());
        assert_eq!(r.worst_param(), Some("b"));
        assert_eq!(r.worst.unwrap().index, 1);
    }
}
