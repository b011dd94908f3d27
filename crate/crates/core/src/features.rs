//! Basis expansion of raw contexts and assembly of design vectors.

use serde::{Deserialize, Serialize};

/// Binary action: 0 = control, 1 = treatment.
pub type Action = u8;

/// Raw covariates of one arriving individual (intercept implicit).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Context {
    pub values: Vec<f64>,
}

impl Context {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    /// Two-covariate context of the synthetic simulation.
    pub fn pair(x1: f64, x2: f64) -> Self {
        Self {
            values: vec![x1, x2],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Degree-2 polynomial basis: intercept, linear terms, squares, then cross
/// terms `x_i x_j` (i < j) in lexicographic pair order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadraticFeatureMap {
    raw_dim: usize,
}

impl QuadraticFeatureMap {
    pub fn new(raw_dim: usize) -> Self {
        Self { raw_dim }
    }

    pub fn raw_dim(&self) -> usize {
        self.raw_dim
    }

    /// `1 + k + k + k(k-1)/2`
    pub fn output_dim(&self) -> usize {
        let k = self.raw_dim;
        1 + 2 * k + k * (k.saturating_sub(1)) / 2
    }

    pub fn apply(&self, ctx: &Context) -> Vec<f64> {
        let x = &ctx.values;
        assert_eq!(
            x.len(),
            self.raw_dim,
            "context has {} covariates, feature map expects {}",
            x.len(),
            self.raw_dim
        );
        let mut out = Vec::with_capacity(self.output_dim());
        out.push(1.0);
        out.extend_from_slice(x);
        out.extend(x.iter().map(|v| v * v));
        for i in 0..x.len() {
            for j in (i + 1)..x.len() {
                out.push(x[i] * x[j]);
            }
        }
        out
    }
}

/// `φ(x) = (1, x1, x2, x1², x2², x1·x2)` for the two-covariate simulation.
pub fn phi(ctx: &Context) -> Vec<f64> {
    QuadraticFeatureMap::new(ctx.dim()).apply(ctx)
}

/// `z = ((1-a)φᵀ, aφᵀ, κ)ᵀ`
pub fn build_design(features: &[f64], action: Action, kappa: f64) -> Vec<f64> {
    let d1 = features.len();
    let mut z = vec![0.0; 2 * d1 + 1];
    let offset = if action == 1 { d1 } else { 0 };
    z[offset..offset + d1].copy_from_slice(features);
    z[2 * d1] = kappa;
    z
}

/// `((1-a)φᵀ, aφᵀ)ᵀ`: the design without the interference column, used by
/// the naive policy's misspecified model.
pub fn build_design_without_kappa(features: &[f64], action: Action) -> Vec<f64> {
    let mut z = build_design(features, action, 0.0);
    z.pop();
    z
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_examples() {
        assert_eq!(phi(&Context::pair(0.0, 0.0)), vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(phi(&Context::pair(1.0, 2.0)), vec![1.0, 1.0, 2.0, 1.0, 4.0, 2.0]);
        assert_eq!(phi(&Context::pair(0.3, 1.1)).len(), 6);
    }

    #[test]
    fn four_covariates_give_fifteen_features() {
        let map = QuadraticFeatureMap::new(4);
        assert_eq!(map.output_dim(), 15);
        let f = map.apply(&Context::new(vec![1.0, 2.0, 3.0, 4.0]));
        assert_eq!(
            f,
            vec![
                1.0, 1.0, 2.0, 3.0, 4.0, 1.0, 4.0, 9.0, 16.0, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0
            ]
        );
    }

    #[test]
    fn design_examples() {
        assert_eq!(build_design(&[1.0, 2.0], 0, 0.5), vec![1.0, 2.0, 0.0, 0.0, 0.5]);
        assert_eq!(build_design(&[1.0, 2.0], 1, 0.0), vec![0.0, 0.0, 1.0, 2.0, 0.0]);
        assert_eq!(build_design_without_kappa(&[1.0, 2.0], 1), vec![0.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn feature_bound_on_synthetic_support() {
        // corners of [-10,10] x [0,2] attain the sup norm of the quadratic basis
        let mut sup: f64 = 0.0;
        for &x1 in &[-10.0, 0.0, 10.0] {
            for &x2 in &[0.0, 2.0] {
                let m = phi(&Context::pair(x1, x2))
                    .iter()
                    .fold(0.0_f64, |m, v| m.max(v.abs()));
                sup = sup.max(m);
            }
        }
        assert_eq!(sup, 100.0);
    }
}
