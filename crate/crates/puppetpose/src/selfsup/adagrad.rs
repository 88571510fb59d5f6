//! Adagrad with the standard accumulator rule.

/// Per-parameter adaptive gradient optimizer:
/// `acc += g^2; p -= lr * g / (sqrt(acc) + eps)`.
#[derive(Clone, Debug)]
pub struct Adagrad {
    pub lr: f64,
    pub eps: f64,
    pub acc: Vec<f64>,
}

impl Adagrad {
    pub fn new(lr: f64, n: usize) -> Self {
        Self { lr, eps: 1e-8, acc: vec![0.0; n] }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), grad.len());
        debug_assert_eq!(params.len(), self.acc.len());
        for i in 0..params.len() {
            self.acc[i] += grad[i] * grad[i];
            params[i] -= self.lr * grad[i] / (self.acc[i].sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut opt = Adagrad::new(0.1, 3);
        let mut p = vec![1.0, -2.0, 0.5];
        opt.step(&mut p, &[0.0, 0.0, 0.0]);
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_is_signed_learning_rate() {
        // acc = g^2 so the first update is lr * g / (|g| + eps) ~ lr * sign(g).
        let mut opt = Adagrad::new(0.1, 2);
        let mut p = vec![0.0, 0.0];
        opt.step(&mut p, &[3.0, -0.2]);
        assert!((p[0] + 0.1).abs() < 1e-7);
        assert!((p[1] - 0.1).abs() < 1e-6);
    }

    #[test]
    fn accumulator_is_monotone() {
        let mut opt = Adagrad::new(0.1, 1);
        let mut p = vec![0.0];
        let mut prev = 0.0;
        for g in [1.0, -0.5, 0.25, 0.0, 2.0] {
            opt.step(&mut p, &[g]);
            assert!(opt.acc[0] >= prev);
            prev = opt.acc[0];
        }
    }
}
