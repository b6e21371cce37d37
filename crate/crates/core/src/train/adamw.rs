use crate::field::{Fields, ParamGroup};
use crate::nn::{Real, TensorKind};

/// Adam with decoupled weight decay. Decay applies to dense weights only;
/// hash tables and biases are never decayed.
#[derive(Clone, Debug)]
pub struct AdamW<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub lr_mapping: f64,
    pub lr_atlas: f64,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> AdamW<T> {
    pub fn new(params: &Fields<T>, lr_mapping: f64, lr_atlas: f64, weight_decay: f64) -> Self {
        let zeros: Vec<Vec<T>> = params
            .tensors()
            .iter()
            .map(|(_, _, t)| vec![T::zero(); t.len()])
            .collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            lr_mapping,
            lr_atlas,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut Fields<T>, grads: &Fields<T>) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::c(self.beta1), T::c(self.beta2));
        let (one_b1, one_b2) = (T::c(1.0 - self.beta1), T::c(1.0 - self.beta2));
        let eps = T::c(self.eps);
        let inv_bc2 = T::c(1.0 / bc2);
        for (((group, kind, p), (_, _, g)), (m, v)) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let lr = match group {
                ParamGroup::Mapping => self.lr_mapping,
                ParamGroup::Atlas => self.lr_atlas,
            };
            let decay = if kind == TensorKind::Weight { self.weight_decay } else { 0.0 };
            let keep = T::c(1.0 - lr * decay);
            let step_size = T::c(lr / bc1);
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + one_b1 * gi;
                v[i] = b2 * v[i] + one_b2 * gi * gi;
                p[i] = p[i] * keep - step_size * m[i] / ((v[i] * inv_bc2).sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{AtlasConfig, MappingConfig};
    use crate::hashgrid::HashGridConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> Fields<f64> {
        let atlas = AtlasConfig {
            grid: HashGridConfig {
                levels: 2,
                base_resolution: 2,
                per_level_scale: 2.0,
                table_size: 16,
                feature_dim: 2,
            },
            hidden_layers: 1,
            width: 4,
        };
        Fields::init(MappingConfig { layers: 2, width: 4 }, atlas, &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
    }

    /// Scalar reference of one decoupled-decay Adam update.
    fn reference(p: f64, g: f64, m: f64, v: f64, t: i32, lr: f64, wd: f64) -> (f64, f64, f64) {
        let m = 0.9 * m + 0.1 * g;
        let v = 0.999 * v + 0.001 * g * g;
        let mh = m / (1.0 - 0.9f64.powi(t));
        let vh = v / (1.0 - 0.999f64.powi(t));
        (p - lr * wd * p - lr * mh / (vh.sqrt() + 1e-8), m, v)
    }

    #[test]
    fn matches_scalar_reference_per_group_and_kind() {
        let mut p = tiny();
        let start = p.clone();
        let mut g = p.zeros_like();
        for (i, (_, _, t)) in g.tensors_mut().into_iter().enumerate() {
            for (j, x) in t.iter_mut().enumerate() {
                *x = ((i * 31 + j * 7) % 13) as f64 / 13.0 - 0.4;
            }
        }
        let mut opt = AdamW::new(&p, 1e-3, 1e-2, 0.01);
        opt.step(&mut p, &g);
        opt.step(&mut p, &g);
        for (((group, kind, a), (_, _, b)), (_, _, gr)) in start.tensors().into_iter().zip(p.tensors()).zip(g.tensors()) {
            let lr = if group == ParamGroup::Mapping { 1e-3 } else { 1e-2 };
            let wd = if kind == TensorKind::Weight { 0.01 } else { 0.0 };
            for i in 0..a.len() {
                let (p1, m1, v1) = reference(a[i], gr[i], 0.0, 0.0, 1, lr, wd);
                let (p2, _, _) = reference(p1, gr[i], m1, v1, 2, lr, wd);
                assert!((p2 - b[i]).abs() < 1e-12, "{group:?} {kind:?} {i}");
            }
        }
    }

    #[test]
    fn zero_gradient_only_decays_weights() {
        let mut p = tiny();
        let start = p.clone();
        let g = p.zeros_like();
        AdamW::new(&p, 0.1, 0.1, 0.5).step(&mut p, &g);
        for ((_, kind, a), (_, _, b)) in start.tensors().into_iter().zip(p.tensors()) {
            for (x, y) in a.iter().zip(b) {
                match kind {
                    TensorKind::Weight => assert!((y - x * 0.95).abs() < 1e-15),
                    _ => assert_eq!(x, y),
                }
            }
        }
    }
}
