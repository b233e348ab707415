use crate::core_math::{Graph, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

/// Mean per-class binary cross-entropy, probabilities clamped to
/// `[1e-7, 1 - 1e-7]`.
pub fn bce_loss(g: &mut Graph, probabilities: Var, targets: &Tensor) -> Result<Var> {
    g.bce(probabilities, targets)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Rescale gradients whose global norm exceeds this.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: None,
        }
    }
}

/// First and second moments for every store entry, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = store.entries().iter().map(|e| Tensor::zeros(e.tensor.shape())).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

pub fn global_norm(store: &ParamStore, grads: &[Tensor]) -> f64 {
    store
        .entries()
        .iter()
        .zip(grads)
        .filter(|(e, _)| e.trainable)
        .map(|(_, g)| g.norm_sq())
        .sum::<f64>()
        .sqrt()
}

/// One bias-corrected Adam update of every trainable entry. Clipping is
/// applied first. Returns the gradient norm before clipping.
pub fn adam_step(store: &mut ParamStore, grads: &[Tensor], state: &mut AdamState, config: &AdamConfig) -> Result<f64> {
    let n = store.len();
    if grads.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::dim("adam_step", &[n], &[grads.len(), state.m.len(), state.v.len()]));
    }
    for ((e, g), (m, v)) in store.entries().iter().zip(grads).zip(state.m.iter().zip(&state.v)) {
        if e.tensor.shape() != g.shape() || e.tensor.shape() != m.shape() || e.tensor.shape() != v.shape() {
            return Err(Error::dim("adam_step", e.tensor.shape(), g.shape()));
        }
        if e.trainable && !g.is_finite() {
            return Err(Error::NonFiniteGradient { block: e.name.clone() });
        }
    }
    let norm = global_norm(store, grads);
    let scale = match config.clip_norm {
        Some(c) if c > 0.0 && norm > c => c / norm,
        _ => 1.0,
    };
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    for (i, e) in store.entries_mut().iter_mut().enumerate() {
        if !e.trainable {
            continue;
        }
        let (m, v) = (state.m[i].data_mut(), state.v[i].data_mut());
        for (((p, &g), m), v) in e.tensor.data_mut().iter_mut().zip(grads[i].data()).zip(m).zip(v) {
            let g = g * scale;
            *m = config.beta1 * *m + (1.0 - config.beta1) * g;
            *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
            *p -= config.learning_rate * (*m / c1) / ((*v / c2).sqrt() + config.epsilon);
        }
    }
    Ok(norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(values: &[f64]) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Tensor::new(&[values.len()], values.to_vec()).unwrap());
        s
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = store(&[1.0, -2.0]);
        let mut st = AdamState::new(&s);
        adam_step(&mut s, &[Tensor::zeros(&[2])], &mut st, &AdamConfig::default()).unwrap();
        assert_eq!(s.entries()[0].tensor.data(), &[1.0, -2.0]);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut s = store(&[0.0]);
        let mut st = AdamState::new(&s);
        let cfg = AdamConfig::default();
        adam_step(&mut s, &[Tensor::ones(&[1])], &mut st, &cfg).unwrap();
        let moved = s.entries()[0].tensor.data()[0];
        assert!((moved + cfg.learning_rate).abs() < 1e-10, "{moved}");
    }

    #[test]
    fn clipping_matches_prescaled_gradient() {
        let g = Tensor::new(&[2], vec![6.0, 8.0]).unwrap();
        let clipped_cfg = AdamConfig {
            clip_norm: Some(1.0),
            ..Default::default()
        };
        let mut a = store(&[0.5, 0.5]);
        let mut sa = AdamState::new(&a);
        let norm = adam_step(&mut a, std::slice::from_ref(&g), &mut sa, &clipped_cfg).unwrap();
        assert_eq!(norm, 10.0);
        let mut b = store(&[0.5, 0.5]);
        let mut sb = AdamState::new(&b);
        let scaled = Tensor::new(&[2], vec![0.6, 0.8]).unwrap();
        adam_step(&mut b, &[scaled], &mut sb, &AdamConfig::default()).unwrap();
        for (x, y) in a.entries()[0].tensor.data().iter().zip(b.entries()[0].tensor.data()) {
            assert!((x - y).abs() < 1e-15);
        }
        for (x, y) in sa.m[0].data().iter().zip(sb.m[0].data()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn non_finite_gradient_names_block() {
        let mut s = store(&[0.0]);
        let mut st = AdamState::new(&s);
        let err = adam_step(&mut s, &[Tensor::full(&[1], f64::NAN)], &mut st, &AdamConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { ref block } if block == "w"));
        assert_eq!(st.step, 0);
    }

    #[test]
    fn bce_closed_forms() {
        let mut g = Graph::new();
        let p = g.constant(Tensor::full(&[2, 3], 0.5));
        let y = Tensor::new(&[2, 3], vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        let l = bce_loss(&mut g, p, &y).unwrap();
        assert!((g.value(l).data()[0] - std::f64::consts::LN_2).abs() < 1e-15);
        let exact = g.constant(y.clone());
        let l = bce_loss(&mut g, exact, &y).unwrap();
        assert!(g.value(l).data()[0] < 1e-6);
        let wrong = g.constant(Tensor::full(&[3, 2], 0.5));
        assert!(matches!(bce_loss(&mut g, wrong, &y), Err(Error::Dimension { .. })));
    }
}
