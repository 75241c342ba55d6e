use super::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(format!("unknown optimizer `{other}` (expected sgd or adam)")),
        }
    }
}

/// Plain SGD or Adam over a fixed list of parameter tensors.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    kind: OptimizerKind,
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    step: i32,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Optimizer<T> {
    /// Adam uses beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
    pub fn new(kind: OptimizerKind, lr: f64, sizes: &[usize]) -> Self {
        let moments = || match kind {
            OptimizerKind::Adam => sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            OptimizerKind::Sgd => Vec::new(),
        };
        Optimizer {
            kind,
            lr: T::from_f64_lossy(lr),
            beta1: T::from_f64_lossy(0.9),
            beta2: T::from_f64_lossy(0.999),
            eps: T::from_f64_lossy(1e-8),
            step: 0,
            m: moments(),
            v: moments(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) {
        assert_eq!(params.len(), grads.len());
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (w, &d) in p.iter_mut().zip(g.iter()) {
                        *w -= self.lr * d;
                    }
                }
            }
            OptimizerKind::Adam => {
                let one = T::one();
                let c1 = one - self.beta1.powi(self.step);
                let c2 = one - self.beta2.powi(self.step);
                for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
                    for (((w, &d), mi), vi) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *mi = self.beta1 * *mi + (one - self.beta1) * d;
                        *vi = self.beta2 * *vi + (one - self.beta2) * d * d;
                        let m_hat = *mi / c1;
                        let v_hat = *vi / c2;
                        *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                    }
                }
            }
        }
    }
}
