//! Central-difference verification of tape gradients.

use super::paramvec::ParameterVector;
use super::tape::{evaluate, gradient, BuildFn};
use crate::error::{Error, Result};
use crate::parallel;

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_TOL: f64 = 1e-4;

/// Relative-error floor: coordinates whose analytic and numeric gradients are
/// both below this magnitude are compared against the floor instead, which
/// keeps finite-difference noise on near-zero gradients from dominating.
const REL_FLOOR: f64 = 1e-3;

/// One checked coordinate.
#[derive(Clone, Debug)]
pub struct GradEntry {
    pub name: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

/// Result of a gradient check.
#[derive(Clone, Debug)]
pub struct GradReport {
    pub entries: Vec<GradEntry>,
    pub max_rel_err: f64,
    pub pass: bool,
    pub eps: f64,
    pub tol: f64,
}

impl GradReport {
    /// Entry with the largest relative error, if any.
    pub fn worst(&self) -> Option<&GradEntry> {
        self.entries
            .iter()
            .max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// Compares the tape gradient of `f` at `x` against central differences with
/// step `eps`, one coordinate at a time.
pub fn gradcheck(f: &BuildFn, x: &ParameterVector, eps: f64, tol: f64) -> Result<GradReport> {
    let analytic = gradient(f, x)?;
    let base = evaluate(f, x)?;
    if !base.is_finite() {
        return Err(Error::Numeric(format!("f(x) is not finite: {base}")));
    }
    let numeric: Vec<Result<f64>> = parallel::map_indexed(x.len(), |i| {
        let mut xp = x.clone();
        xp.data_mut()[i] += eps;
        let fp = evaluate(f, &xp)?;
        xp.data_mut()[i] -= 2.0 * eps;
        let fm = evaluate(f, &xp)?;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::Numeric(format!(
                "NaN in finite differences at coordinate {}",
                x.coord_name(i)
            )));
        }
        Ok((fp - fm) / (2.0 * eps))
    });

    let mut entries = Vec::with_capacity(x.len());
    let mut max_rel = 0.0f64;
    for (i, n) in numeric.into_iter().enumerate() {
        let n = n?;
        let a = analytic.data()[i];
        let e = rel_err(a, n);
        max_rel = max_rel.max(e);
        entries.push(GradEntry {
            name: x.coord_name(i),
            analytic: a,
            numeric: n,
            rel_err: e,
        });
    }
    Ok(GradReport {
        entries,
        max_rel_err: max_rel,
        pass: max_rel < tol,
        eps,
        tol,
    })
}

/// Gradient check with the default step and tolerance.
pub fn gradcheck_fn(f: &BuildFn, x: &ParameterVector) -> Result<GradReport> {
    gradcheck(f, x, DEFAULT_EPS, DEFAULT_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{Tape, Tensor, ValueId};
    use crate::nn::ops::WeightedSum;

    struct SumSquares;
    impl crate::diffcore::Op for SumSquares {
        fn name(&self) -> &'static str {
            "sum_squares"
        }
        fn forward(&self, inputs: &[&Tensor]) -> Result<Vec<Tensor>> {
            let s: f64 = inputs[0].data().iter().map(|v| v * v).sum();
            Ok(vec![Tensor::scalar(s)])
        }
        fn backward(
            &self,
            inputs: &[&Tensor],
            _outputs: &[&Tensor],
            grad_outputs: &[&Tensor],
        ) -> Result<Vec<Tensor>> {
            let g = grad_outputs[0].item();
            let mut out = inputs[0].clone();
            for v in out.data_mut() {
                *v *= 2.0 * g;
            }
            Ok(vec![out])
        }
    }

    fn sum_squares(t: &mut Tape, leaves: &[ValueId]) -> Result<ValueId> {
        t.apply1(SumSquares, &[leaves[0]])
    }

    #[test]
    fn gradient_of_sum_squares_is_2x() {
        let mut x = ParameterVector::new();
        x.push("x", vec![4], vec![1.0, -2.0, 0.5, 3.0]);
        let g = gradient(&sum_squares, &x).unwrap();
        assert_eq!(g.data(), &[2.0, -4.0, 1.0, 6.0]);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let f = |t: &mut Tape, _leaves: &[ValueId]| -> Result<ValueId> {
            Ok(t.input(Tensor::scalar(7.0)))
        };
        let mut x = ParameterVector::new();
        x.push("x", vec![3], vec![1.0, 2.0, 3.0]);
        let g = gradient(&f, &x).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradcheck_passes_on_smooth_function() {
        let mut x = ParameterVector::new();
        x.push("x", vec![4], vec![0.3, -1.1, 0.9, 2.0]);
        let r = gradcheck_fn(&sum_squares, &x).unwrap();
        assert!(r.pass, "max rel err {}", r.max_rel_err);
    }

    #[test]
    fn gradient_is_linear_in_the_function() {
        // gradient(a*f + b*g) == a*gradient(f) + b*gradient(g)
        let (a, b) = (2.5, -0.75);
        let mut x = ParameterVector::new();
        x.push("x", vec![3], vec![0.4, 1.3, -0.2]);

        let combined = |t: &mut Tape, leaves: &[ValueId]| -> Result<ValueId> {
            let f = t.apply1(SumSquares, &[leaves[0]])?;
            // g = sum of cubes via x^2 path is unavailable; reuse squares with
            // a different input transform: g(x) = sum((x + 1)^2).
            let shifted: Vec<f64> = t.value(leaves[0]).data().iter().map(|v| v + 1.0).collect();
            let _ = shifted; // g is built from the same leaf through Shift op below.
            let s = t.apply1(Shift(1.0), &[leaves[0]])?;
            let g = t.apply1(SumSquares, &[s])?;
            t.apply1(WeightedSum::new(vec![a, b]), &[f, g])
        };
        let f_only = |t: &mut Tape, leaves: &[ValueId]| -> Result<ValueId> {
            t.apply1(SumSquares, &[leaves[0]])
        };
        let g_only = |t: &mut Tape, leaves: &[ValueId]| -> Result<ValueId> {
            let s = t.apply1(Shift(1.0), &[leaves[0]])?;
            t.apply1(SumSquares, &[s])
        };
        let gc = gradient(&combined, &x).unwrap();
        let gf = gradient(&f_only, &x).unwrap();
        let gg = gradient(&g_only, &x).unwrap();
        for i in 0..x.len() {
            let want = a * gf.data()[i] + b * gg.data()[i];
            assert!((gc.data()[i] - want).abs() < 1e-12);
        }
    }

    struct Shift(f64);
    impl crate::diffcore::Op for Shift {
        fn name(&self) -> &'static str {
            "shift"
        }
        fn forward(&self, inputs: &[&Tensor]) -> Result<Vec<Tensor>> {
            let mut out = inputs[0].clone();
            for v in out.data_mut() {
                *v += self.0;
            }
            Ok(vec![out])
        }
        fn backward(
            &self,
            _inputs: &[&Tensor],
            _outputs: &[&Tensor],
            grad_outputs: &[&Tensor],
        ) -> Result<Vec<Tensor>> {
            Ok(vec![grad_outputs[0].clone()])
        }
    }

    #[test]
    fn gradients_are_deterministic() {
        let mut x = ParameterVector::new();
        x.push("x", vec![5], vec![0.1, 0.2, 0.3, 0.4, 0.5]);
        let g1 = gradient(&sum_squares, &x).unwrap();
        let g2 = gradient(&sum_squares, &x).unwrap();
        assert_eq!(g1.data(), g2.data());
    }
}
