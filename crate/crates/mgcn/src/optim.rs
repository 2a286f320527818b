use nalgebra::DMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled shrinkage: each step also subtracts `lr * weight_decay * theta`.
    pub weight_decay: f64,
}

impl AdamParams {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

/// Adam with decoupled weight decay. Moment buffers follow the order of the
/// parameter list passed to [`Adam::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub params: AdamParams,
    pub step: u64,
    pub m: Vec<DMatrix<f64>>,
    pub v: Vec<DMatrix<f64>>,
}

impl Adam {
    pub fn new(params: AdamParams, shapes: &[(usize, usize)]) -> Self {
        let zeros: Vec<DMatrix<f64>> = shapes.iter().map(|&(r, c)| DMatrix::zeros(r, c)).collect();
        Self {
            params,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, theta: Vec<&mut DMatrix<f64>>, grads: &[DMatrix<f64>]) {
        assert_eq!(theta.len(), self.m.len(), "parameter count changed");
        assert_eq!(grads.len(), self.m.len(), "gradient count does not match parameters");
        self.step += 1;
        let AdamParams { lr, beta1, beta2, eps, weight_decay } = self.params;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, g), m), v) in theta.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            assert_eq!(p.shape(), g.shape(), "gradient shape does not match parameter");
            for (((x, &g), m), v) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let update = (*m / c1) / ((*v / c2).sqrt() + eps);
                *x -= lr * (update + weight_decay * *x);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = DMatrix::from_row_slice(1, 3, &[1.0, -2.0, 0.5]);
        let g = DMatrix::from_row_slice(1, 3, &[0.3, -4.0, 0.0]);
        let mut opt = Adam::new(AdamParams::new(0.1, 0.0), &[(1, 3)]);
        opt.step(vec![&mut p], &[g]);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] - -1.9).abs() < 1e-6);
        assert_eq!(p[2], 0.5);
    }

    #[test]
    fn decay_is_decoupled() {
        let mut p = DMatrix::from_element(2, 2, 4.0);
        let mut opt = Adam::new(AdamParams::new(0.01, 0.5), &[(2, 2)]);
        opt.step(vec![&mut p], &[DMatrix::zeros(2, 2)]);
        assert!((p[0] - (4.0 - 0.01 * 0.5 * 4.0)).abs() < 1e-15);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let target = DMatrix::from_row_slice(2, 1, &[3.0, -1.0]);
        let mut p = DMatrix::zeros(2, 1);
        let mut opt = Adam::new(AdamParams::new(0.05, 0.0), &[(2, 1)]);
        for _ in 0..2000 {
            let g = (&p - &target) * 2.0;
            opt.step(vec![&mut p], &[g]);
        }
        assert!((&p - &target).amax() < 1e-3);
    }
}
