//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::param::ParamViewMut;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 2e-3,
            beta1: 0.9,
            beta2: 0.9,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates, one buffer per parameter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new() -> Self {
        AdamState::default()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// Applies one Adam update to `params` in place.
///
/// `grads[i]` must have the length of `params[i]`. All gradients are
/// checked for finiteness before any parameter is touched.
pub fn adam_step(
    params: &mut [ParamViewMut<'_>],
    grads: &[&[f64]],
    state: &mut AdamState,
    hyper: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::shape(
            "adam_step",
            format!("{} parameters but {} gradients", params.len(), grads.len()),
        ));
    }
    if state.first.is_empty() {
        state.first = params.iter().map(|p| vec![0.0; p.data.len()]).collect();
        state.second = state.first.clone();
    }
    if state.first.len() != params.len() {
        return Err(Error::shape(
            "adam_step",
            format!("state tracks {} parameters, got {}", state.first.len(), params.len()),
        ));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.first) {
        if p.data.len() != g.len() || p.data.len() != m.len() {
            return Err(Error::shape(
                "adam_step",
                format!(
                    "`{}`: {} values, {} gradients, {} moments",
                    p.name,
                    p.data.len(),
                    g.len(),
                    m.len()
                ),
            ));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient {
                param: p.name.clone(),
            });
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - hyper.beta1.powi(t);
    let c2 = 1.0 - hyper.beta2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        let (m, v) = (&mut state.first[i], &mut state.second[i]);
        for (k, (x, &g)) in p.data.iter_mut().zip(grads[i]).enumerate() {
            m[k] = hyper.beta1 * m[k] + (1.0 - hyper.beta1) * g;
            v[k] = hyper.beta2 * v[k] + (1.0 - hyper.beta2) * g * g;
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            *x -= hyper.learning_rate * m_hat / (v_hat.sqrt() + hyper.epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::view_mut;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut data = vec![0.5, -1.25, 3.0];
        let mut state = AdamState::new();
        let zeros = vec![0.0; 3];
        for _ in 0..10 {
            let mut params = vec![view_mut("p", &mut data)];
            adam_step(&mut params, &[&zeros], &mut state, &AdamConfig::default()).unwrap();
        }
        assert_eq!(data, vec![0.5, -1.25, 3.0]);
        assert_eq!(state.step_count(), 10);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = g = 1, v_hat = g^2 = 1, so the step is lr / (1 + eps).
        let mut data = vec![2.0];
        let mut state = AdamState::new();
        let hyper = AdamConfig {
            learning_rate: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        };
        let mut params = vec![view_mut("p", &mut data)];
        adam_step(&mut params, &[&[1.0]], &mut state, &hyper).unwrap();
        let expected = 2.0 - 0.1 / (1.0 + 1e-8);
        assert!((data[0] - expected).abs() < 1e-15);
        assert!((2.0 - data[0] - 0.1).abs() < 1e-8);
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut a = vec![1.0];
        let mut b = vec![1.0, 2.0];
        let mut state = AdamState::new();
        let mut params = vec![view_mut("a", &mut a), view_mut("b", &mut b)];
        let err = adam_step(
            &mut params,
            &[&[0.1], &[f64::NAN, 0.0]],
            &mut state,
            &AdamConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { ref param } if param == "b"));
        assert_eq!(a, vec![1.0]);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut a = vec![1.0, 2.0];
        let mut state = AdamState::new();
        let mut params = vec![view_mut("a", &mut a)];
        assert!(adam_step(&mut params, &[&[0.1]], &mut state, &AdamConfig::default()).is_err());
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let mut data = vec![0.3, -0.7];
            let mut state = AdamState::new();
            for step in 0..50 {
                let g = [(step as f64).sin(), (step as f64 * 0.3).cos()];
                let mut params = vec![view_mut("p", &mut data)];
                adam_step(&mut params, &[&g], &mut state, &AdamConfig::default()).unwrap();
            }
            data
        };
        let a = run();
        let b = run();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
        assert_eq!(a[1].to_bits(), b[1].to_bits());
    }
}
