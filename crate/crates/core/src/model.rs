//! The verifier network: `p(z = 1 | x) = sigmoid(MLP(phi(x)))` with two
//! ReLU hidden layers, plus hand-written backpropagation.
//!
//! All parameters live in one flat buffer, laid out as
//! `W1 (h1 x d, row-major) | b1 | W2 (h2 x h1) | b2 | w3 (h2) | b3`.
//! Gradients and optimizer moments use the same layout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::FeatureVector;

/// Logits are clamped to this magnitude before the sigmoid.
pub const LOGIT_CLAMP: f64 = 30.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Widths {
    pub input: usize,
    pub hidden1: usize,
    pub hidden2: usize,
}

impl Widths {
    pub fn new(input: usize, hidden1: usize, hidden2: usize) -> Result<Self> {
        if input == 0 || hidden1 == 0 || hidden2 == 0 {
            return Err(Error::InvalidDims {
                d: input,
                h1: hidden1,
                h2: hidden2,
            });
        }
        Ok(Widths {
            input,
            hidden1,
            hidden2,
        })
    }

    pub fn param_count(&self) -> usize {
        let Widths {
            input: d,
            hidden1: h1,
            hidden2: h2,
        } = *self;
        d * h1 + h1 + h1 * h2 + h2 + h2 + 1
    }

    fn offsets(&self) -> Offsets {
        let Widths {
            input: d,
            hidden1: h1,
            hidden2: h2,
        } = *self;
        let w1 = 0;
        let b1 = w1 + d * h1;
        let w2 = b1 + h1;
        let b2 = w2 + h1 * h2;
        let w3 = b2 + h2;
        let b3 = w3 + h2;
        Offsets { w1, b1, w2, b2, w3, b3 }
    }
}

#[derive(Clone, Copy)]
struct Offsets {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifierModel {
    widths: Widths,
    params: Vec<f64>,
}

/// Intermediate values of one forward pass, needed by [`VerifierModel::backward`].
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    pub pre1: Vec<f64>,
    pub act1: Vec<f64>,
    pub pre2: Vec<f64>,
    pub act2: Vec<f64>,
    /// Unclamped output logit.
    pub logit: f64,
    pub p: f64,
}

/// Gradient of a scalar loss with respect to every parameter and the input.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl VerifierModel {
    /// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
    pub fn init(d: usize, h1: usize, h2: usize, seed: u64) -> Result<Self> {
        let widths = Widths::new(d, h1, h2)?;
        let o = widths.offsets();
        let mut params = vec![0.0; widths.param_count()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |slice: &mut [f64], fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for w in slice {
                *w = rng.random_range(-bound..bound);
            }
        };
        fill(&mut params[o.w1..o.b1], d);
        fill(&mut params[o.w2..o.b2], h1);
        fill(&mut params[o.w3..o.b3], h2);
        Ok(VerifierModel { widths, params })
    }

    pub fn from_params(widths: Widths, params: Vec<f64>) -> Result<Self> {
        if params.len() != widths.param_count() {
            return Err(Error::ShapeMismatch {
                expected: widths.param_count(),
                actual: params.len(),
            });
        }
        Ok(VerifierModel { widths, params })
    }

    pub fn zeros(widths: Widths) -> Self {
        VerifierModel {
            widths,
            params: vec![0.0; widths.param_count()],
        }
    }

    pub fn widths(&self) -> Widths {
        self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths.input
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn biases(&self) -> impl Iterator<Item = f64> + '_ {
        let o = self.widths.offsets();
        self.params[o.b1..o.w2]
            .iter()
            .chain(&self.params[o.b2..o.w3])
            .chain(&self.params[o.b3..])
            .copied()
    }

    pub fn forward(&self, x: &FeatureVector) -> Result<ForwardTrace> {
        self.forward_slice(&x.to_f64())
    }

    pub fn forward_slice(&self, x: &[f64]) -> Result<ForwardTrace> {
        let Widths {
            input: d,
            hidden1: h1,
            hidden2: h2,
        } = self.widths;
        if x.len() != d {
            return Err(Error::DimMismatch {
                expected: d,
                actual: x.len(),
            });
        }
        let o = self.widths.offsets();
        let p = &self.params;

        let pre1: Vec<f64> = (0..h1)
            .map(|r| dot(&p[o.w1 + r * d..o.w1 + (r + 1) * d], x) + p[o.b1 + r])
            .collect();
        let act1: Vec<f64> = pre1.iter().map(|v| v.max(0.0)).collect();
        let pre2: Vec<f64> = (0..h2)
            .map(|r| dot(&p[o.w2 + r * h1..o.w2 + (r + 1) * h1], &act1) + p[o.b2 + r])
            .collect();
        let act2: Vec<f64> = pre2.iter().map(|v| v.max(0.0)).collect();
        let logit = dot(&p[o.w3..o.b3], &act2) + p[o.b3];
        let prob = sigmoid(logit.clamp(-LOGIT_CLAMP, LOGIT_CLAMP));

        Ok(ForwardTrace {
            input: x.to_vec(),
            pre1,
            act1,
            pre2,
            act2,
            logit,
            p: prob,
        })
    }

    /// Probability only, without keeping the trace.
    pub fn predict(&self, x: &FeatureVector) -> Result<f64> {
        Ok(self.forward(x)?.p)
    }

    fn check_trace(&self, trace: &ForwardTrace) -> Result<()> {
        let w = self.widths;
        if trace.input.len() != w.input
            || trace.pre1.len() != w.hidden1
            || trace.act1.len() != w.hidden1
            || trace.pre2.len() != w.hidden2
            || trace.act2.len() != w.hidden2
        {
            return Err(Error::StaleTrace);
        }
        Ok(())
    }

    /// Gradients of a loss `L` given `dL/dp` at this trace.
    pub fn backward(&self, trace: &ForwardTrace, dl_dp: f64) -> Result<GradientSet> {
        let mut params = vec![0.0; self.params.len()];
        let input = self.backward_into(trace, dl_dp, &mut params, true)?;
        Ok(GradientSet {
            params,
            input: input.unwrap_or_default(),
        })
    }

    /// Add the parameter gradient of `dl_dp * p` into `grads`.
    pub fn accumulate_grad(&self, trace: &ForwardTrace, dl_dp: f64, grads: &mut [f64]) -> Result<()> {
        self.backward_into(trace, dl_dp, grads, false).map(|_| ())
    }

    fn backward_into(
        &self,
        trace: &ForwardTrace,
        dl_dp: f64,
        grads: &mut [f64],
        want_input: bool,
    ) -> Result<Option<Vec<f64>>> {
        self.check_trace(trace)?;
        if grads.len() != self.params.len() {
            return Err(Error::ShapeMismatch {
                expected: self.params.len(),
                actual: grads.len(),
            });
        }
        let Widths {
            input: d,
            hidden1: h1,
            hidden2: h2,
        } = self.widths;
        let o = self.widths.offsets();
        let p = &self.params;

        let clamped = trace.logit.abs() > LOGIT_CLAMP;
        let d_logit = if clamped { 0.0 } else { dl_dp * trace.p * (1.0 - trace.p) };
        if d_logit == 0.0 {
            return Ok(want_input.then(|| vec![0.0; d]));
        }

        grads[o.b3] += d_logit;
        let mut d_pre2 = vec![0.0; h2];
        for r in 0..h2 {
            grads[o.w3 + r] += d_logit * trace.act2[r];
            if trace.pre2[r] > 0.0 {
                d_pre2[r] = d_logit * p[o.w3 + r];
            }
        }

        let mut d_act1 = vec![0.0; h1];
        for r in 0..h2 {
            let g = d_pre2[r];
            if g == 0.0 {
                continue;
            }
            grads[o.b2 + r] += g;
            let row = o.w2 + r * h1;
            for c in 0..h1 {
                grads[row + c] += g * trace.act1[c];
                d_act1[c] += g * p[row + c];
            }
        }

        let mut d_input = want_input.then(|| vec![0.0; d]);
        for r in 0..h1 {
            if trace.pre1[r] <= 0.0 {
                continue;
            }
            let g = d_act1[r];
            grads[o.b1 + r] += g;
            let row = o.w1 + r * d;
            for c in 0..d {
                grads[row + c] += g * trace.input[c];
            }
            if let Some(dx) = d_input.as_mut() {
                for c in 0..d {
                    dx[c] += g * p[row + c];
                }
            }
        }
        Ok(d_input)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[f32]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    // Direct transcription of sigma(W3 relu(W2 relu(W1 x + b1) + b2) + b3)
    // with explicit nested loops over matrices built from the flat buffer.
    fn reference_forward(m: &VerifierModel, x: &[f64]) -> f64 {
        let Widths {
            input: d,
            hidden1: h1,
            hidden2: h2,
        } = m.widths();
        let mut it = m.params().iter().copied();
        let w1: Vec<Vec<f64>> = (0..h1).map(|_| (0..d).map(|_| it.next().unwrap()).collect()).collect();
        let b1: Vec<f64> = (0..h1).map(|_| it.next().unwrap()).collect();
        let w2: Vec<Vec<f64>> = (0..h2).map(|_| (0..h1).map(|_| it.next().unwrap()).collect()).collect();
        let b2: Vec<f64> = (0..h2).map(|_| it.next().unwrap()).collect();
        let w3: Vec<f64> = (0..h2).map(|_| it.next().unwrap()).collect();
        let b3 = it.next().unwrap();
        assert!(it.next().is_none());

        let mut a1 = vec![0.0; h1];
        for i in 0..h1 {
            let mut s = b1[i];
            for j in 0..d {
                s += w1[i][j] * x[j];
            }
            a1[i] = if s > 0.0 { s } else { 0.0 };
        }
        let mut a2 = vec![0.0; h2];
        for i in 0..h2 {
            let mut s = b2[i];
            for j in 0..h1 {
                s += w2[i][j] * a1[j];
            }
            a2[i] = if s > 0.0 { s } else { 0.0 };
        }
        let mut z = b3;
        for i in 0..h2 {
            z += w3[i] * a2[i];
        }
        1.0 / (1.0 + (-z).exp())
    }

    #[test]
    fn init_is_deterministic() {
        let a = VerifierModel::init(5, 7, 3, 42).unwrap();
        let b = VerifierModel::init(5, 7, 3, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, VerifierModel::init(5, 7, 3, 43).unwrap());
    }

    #[test]
    fn param_count_matches_shapes() {
        let m = VerifierModel::init(4, 2, 2, 0).unwrap();
        assert_eq!(m.param_count(), 4 * 2 + 2 + 2 * 2 + 2 + 2 + 1);
        assert_eq!(m.param_count(), 19);
    }

    #[test]
    fn fresh_biases_are_zero() {
        let m = VerifierModel::init(6, 5, 4, 9).unwrap();
        assert_eq!(m.biases().count(), 5 + 4 + 1);
        assert!(m.biases().all(|b| b == 0.0));
    }

    #[test]
    fn weights_respect_fan_in_bound() {
        let m = VerifierModel::init(16, 8, 4, 1).unwrap();
        let o = m.widths().offsets();
        assert!(m.params()[o.w1..o.b1].iter().all(|w| w.abs() <= 0.25));
        assert!(m.params()[o.w2..o.b2].iter().all(|w| w.abs() <= 1.0 / 8f64.sqrt()));
    }

    #[test]
    fn invalid_widths() {
        assert!(matches!(VerifierModel::init(0, 2, 2, 0), Err(Error::InvalidDims { .. })));
        assert!(matches!(VerifierModel::init(2, 2, 0, 0), Err(Error::InvalidDims { .. })));
    }

    #[test]
    fn zero_model_gives_half() {
        let m = VerifierModel::zeros(Widths::new(3, 4, 2).unwrap());
        assert_eq!(m.predict(&fv(&[1.0, -2.0, 3.0])).unwrap(), 0.5);
    }

    #[test]
    fn large_logit_stays_below_one() {
        let mut m = VerifierModel::zeros(Widths::new(1, 1, 1).unwrap());
        let b3 = m.param_count() - 1;
        m.params_mut()[b3] = 20.0;
        let p = m.predict(&fv(&[0.0])).unwrap();
        assert!(p < 1.0 && 1.0 - p < 1e-8);

        m.params_mut()[b3] = 1e4;
        let p = m.predict(&fv(&[0.0])).unwrap();
        assert!(p < 1.0);
        m.params_mut()[b3] = -1e4;
        assert!(m.predict(&fv(&[0.0])).unwrap() > 0.0);
    }

    #[test]
    fn forward_matches_reference() {
        let m = VerifierModel::init(6, 9, 5, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
            let got = m.forward_slice(&x).unwrap().p;
            let want = reference_forward(&m, &x);
            assert!((got - want).abs() < 1e-14, "{got} vs {want}");
        }
    }

    #[test]
    fn forward_rejects_wrong_dim() {
        let m = VerifierModel::init(3, 2, 2, 0).unwrap();
        assert!(matches!(
            m.forward(&fv(&[1.0, 2.0])),
            Err(Error::DimMismatch { expected: 3, actual: 2 })
        ));
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let m = VerifierModel::init(4, 6, 3, 5).unwrap();
        let t = m.forward(&fv(&[0.3, -0.2, 1.0, 0.5])).unwrap();
        let g = m.backward(&t, 0.0).unwrap();
        assert!(g.params.iter().all(|v| *v == 0.0));
        assert!(g.input.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn stale_trace_is_rejected() {
        let small = VerifierModel::init(2, 3, 2, 0).unwrap();
        let big = VerifierModel::init(2, 4, 2, 0).unwrap();
        let t = small.forward(&fv(&[1.0, 1.0])).unwrap();
        assert!(matches!(big.backward(&t, 1.0), Err(Error::StaleTrace)));
    }

    #[test]
    fn gradients_are_additive() {
        let m = VerifierModel::init(4, 6, 3, 8).unwrap();
        let t = m.forward(&fv(&[0.9, -0.4, 0.2, 1.3])).unwrap();
        let once = m.backward(&t, 0.7).unwrap();
        let mut twice = vec![0.0; m.param_count()];
        m.accumulate_grad(&t, 0.7, &mut twice).unwrap();
        m.accumulate_grad(&t, 0.7, &mut twice).unwrap();
        for (a, b) in once.params.iter().zip(&twice) {
            assert_eq!(2.0 * a, *b);
        }
    }

    fn fd_check(seed: u64) {
        let d = 5;
        let mut m = VerifierModel::init(d, 7, 4, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        for b in m.params_mut().iter_mut() {
            *b += rng.random_range(-0.1..0.1);
        }
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
        let t = m.forward_slice(&x).unwrap();
        if t.pre1.iter().chain(&t.pre2).any(|z| z.abs() < 1e-3) {
            return;
        }
        // L = p^2 so dL/dp = 2p.
        let g = m.backward(&t, 2.0 * t.p).unwrap();
        let eps = 1e-4;
        for k in 0..m.param_count() {
            let mut plus = m.clone();
            plus.params_mut()[k] += eps;
            let mut minus = m.clone();
            minus.params_mut()[k] -= eps;
            let lp = plus.forward_slice(&x).unwrap().p.powi(2);
            let lm = minus.forward_slice(&x).unwrap().p.powi(2);
            let fd = (lp - lm) / (2.0 * eps);
            let rel = (g.params[k] - fd).abs() / g.params[k].abs().max(1.0);
            assert!(rel < 1e-4, "param {k}: {} vs {fd}", g.params[k]);
        }
        for c in 0..d {
            let mut xp = x.clone();
            xp[c] += eps;
            let mut xm = x.clone();
            xm[c] -= eps;
            let fd = (m.forward_slice(&xp).unwrap().p.powi(2) - m.forward_slice(&xm).unwrap().p.powi(2)) / (2.0 * eps);
            assert!((g.input[c] - fd).abs() / g.input[c].abs().max(1.0) < 1e-4);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        for seed in 0..10 {
            fd_check(seed);
        }
    }
}
