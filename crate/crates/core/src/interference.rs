//! Interference weight schemes, the interference action κₜ, and the forward
//! weight sum ζₜ.
//!
//! Every scheme here assigns equal weights `1/g(t)` to the most recent `g(t)`
//! individuals:
//!
//! ```text
//! w_ts = 1{ t - g(t) <= s <= t - 1 } / g(t),     s >= 1
//! κ_t  = Σ_{s<t} w_ts a_s
//! ζ_t  = Σ_{s>t} w_st
//! ```
//!
//! A fixed window uses `g(t) = N`. Weights with `s >= t` are always zero.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::Action;

/// Hard cap on the number of forward steps scanned when computing ζₜ.
pub const ZETA_SCAN_CAP: u64 = 100_000_000;

/// Absorbs floating error in `floor(ρ t)` and friends when the exact value is
/// an integer (e.g. `20 * 32^0.2`).
const FLOOR_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum InterferenceError {
    #[error("forward scan for zeta at t={t} exceeded {cap} steps")]
    CapExceeded { t: u64, cap: u64 },
    #[error("invalid weight scheme: {0}")]
    InvalidScheme(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightScheme {
    /// `g(t) = N`
    FixedWindow { window: u64 },
    /// `g(t) = ⌊ρ t⌋`, `0 < ρ < 1`
    GrowingLinear { rho: f64 },
    /// `g(t) = ⌊ρ √t⌋`, `ρ > 0`
    GrowingSqrt { rho: f64 },
    /// `g(t) = ⌊scale · t^exponent⌋`, `0 < exponent < 1`
    GrowingPower { scale: f64, exponent: f64 },
}

impl WeightScheme {
    pub fn validate(&self) -> Result<(), InterferenceError> {
        use InterferenceError::InvalidScheme;
        match *self {
            WeightScheme::FixedWindow { window } if window == 0 => {
                Err(InvalidScheme("window must be at least 1"))
            }
            WeightScheme::GrowingLinear { rho } if !(rho > 0.0 && rho < 1.0) => {
                Err(InvalidScheme("growing_linear requires 0 < rho < 1"))
            }
            WeightScheme::GrowingSqrt { rho } if !(rho > 0.0 && rho.is_finite()) => {
                Err(InvalidScheme("growing_sqrt requires rho > 0"))
            }
            WeightScheme::GrowingPower { scale, exponent }
                if !(scale > 0.0 && scale.is_finite() && exponent > 0.0 && exponent < 1.0) =>
            {
                Err(InvalidScheme(
                    "growing_power requires scale > 0 and 0 < exponent < 1",
                ))
            }
            _ => Ok(()),
        }
    }

    /// Config-file name of the scheme kind.
    pub fn kind_name(&self) -> &'static str {
        match self {
            WeightScheme::FixedWindow { .. } => "fixed_window",
            WeightScheme::GrowingLinear { .. } => "growing_linear",
            WeightScheme::GrowingSqrt { .. } => "growing_sqrt",
            WeightScheme::GrowingPower { .. } => "growing_power",
        }
    }

    /// Short human label, e.g. `g(t)=floor(0.2t)`.
    pub fn label(&self) -> String {
        match *self {
            WeightScheme::FixedWindow { window } => format!("N={window}"),
            WeightScheme::GrowingLinear { rho } => format!("g(t)=floor({rho}t)"),
            WeightScheme::GrowingSqrt { rho } => format!("g(t)=floor({rho}sqrt(t))"),
            WeightScheme::GrowingPower { scale, exponent } => {
                format!("g(t)=floor({scale}t^{exponent})")
            }
        }
    }

    /// Neighborhood size `g(t)`, floored at 1.
    pub fn neighborhood_size(&self, t: u64) -> u64 {
        debug_assert!(t >= 1);
        let raw = match *self {
            WeightScheme::FixedWindow { window } => return window.max(1),
            WeightScheme::GrowingLinear { rho } => rho * t as f64,
            WeightScheme::GrowingSqrt { rho } => rho * (t as f64).sqrt(),
            WeightScheme::GrowingPower { scale, exponent } => scale * (t as f64).powf(exponent),
        };
        ((raw + FLOOR_SLACK).floor() as u64).max(1)
    }

    /// First index in the window of individual `t` (clamped at 1).
    fn window_start(&self, t: u64) -> u64 {
        t.saturating_sub(self.neighborhood_size(t)).max(1)
    }

    /// `w_ts`; zero unless `s` lies in the window `[t - g(t), t - 1]`.
    pub fn weight(&self, t: u64, s: u64) -> f64 {
        if s == 0 || s >= t {
            return 0.0;
        }
        let g = self.neighborhood_size(t);
        if s + g >= t {
            1.0 / g as f64
        } else {
            0.0
        }
    }

    /// `ζ_t = Σ_{s>t} w_st`.
    pub fn zeta(&self, t: u64) -> Result<f64, InterferenceError> {
        self.zeta_with_cap(t, ZETA_SCAN_CAP)
    }

    pub fn zeta_with_cap(&self, t: u64, cap: u64) -> Result<f64, InterferenceError> {
        self.forward_scan(t, None, cap)
    }

    /// `Σ_{s=t+1}^{horizon} w_st`: ζₜ cut off at the horizon.
    pub fn zeta_truncated(&self, t: u64, horizon: u64) -> f64 {
        // the scan stops at `horizon`, so the cap can only bind for absurd horizons
        self.forward_scan(t, Some(horizon), u64::MAX)
            .expect("bounded scan cannot exceed cap")
    }

    /// Scans `s = t+1, t+2, ...` adding `1/g(s)` while `s - g(s) <= t`.
    /// Runs sharing a neighborhood size are summed as `count / g` so a fixed
    /// window yields exactly `N / N = 1`.
    fn forward_scan(&self, t: u64, horizon: Option<u64>, cap: u64) -> Result<f64, InterferenceError> {
        let mut total = 0.0;
        let mut run_g = 0u64;
        let mut run_len = 0u64;
        let mut s = t + 1;
        let mut steps = 0u64;
        loop {
            if let Some(h) = horizon {
                if s > h {
                    break;
                }
            }
            let g = self.neighborhood_size(s);
            if s > t + g {
                break;
            }
            if g != run_g {
                if run_len > 0 {
                    total += run_len as f64 / run_g as f64;
                }
                run_g = g;
                run_len = 0;
            }
            run_len += 1;
            s += 1;
            steps += 1;
            if steps >= cap {
                return Err(InterferenceError::CapExceeded { t, cap });
            }
        }
        if run_len > 0 {
            total += run_len as f64 / run_g as f64;
        }
        Ok(total)
    }

    /// Largest `s` with `s - g(s) <= t`, found by the same forward scan.
    pub fn last_influenced(&self, t: u64) -> u64 {
        let mut s = t + 1;
        while s <= t + self.neighborhood_size(s) {
            s += 1;
        }
        s - 1
    }
}

/// Append-only action history with O(1) κₜ queries via prefix counts.
#[derive(Debug, Clone)]
pub struct KappaState {
    scheme: WeightScheme,
    actions: Vec<Action>,
    // prefix[k] = number of ones among a_1..a_k
    prefix: Vec<u64>,
}

impl KappaState {
    pub fn new(scheme: WeightScheme) -> Self {
        Self {
            scheme,
            actions: Vec::new(),
            prefix: vec![0],
        }
    }

    pub fn scheme(&self) -> &WeightScheme {
        &self.scheme
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn push(&mut self, action: Action) {
        debug_assert!(action <= 1);
        let last = *self.prefix.last().unwrap();
        self.actions.push(action);
        self.prefix.push(last + action as u64);
    }

    /// `κ_t` for the next individual `t = len + 1`.
    pub fn next_kappa(&self) -> f64 {
        self.kappa(self.actions.len() as u64 + 1)
    }

    /// `κ_t = Σ_{s<t} w_ts a_s`; zero at `t = 1`.
    pub fn kappa(&self, t: u64) -> f64 {
        assert!(t >= 1);
        assert!(
            (t - 1) as usize <= self.actions.len(),
            "kappa at t={t} needs {} past actions, have {}",
            t - 1,
            self.actions.len()
        );
        if t == 1 {
            return 0.0;
        }
        let g = self.scheme.neighborhood_size(t);
        let start = self.scheme.window_start(t);
        let ones = self.prefix[(t - 1) as usize] - self.prefix[(start - 1) as usize];
        ones as f64 / g as f64
    }
}

/// Direct evaluation of `Σ_{s<t} w_ts a_s` from the weight function.
pub fn kappa_from_weights(scheme: &WeightScheme, actions: &[Action], t: u64) -> f64 {
    (1..t)
        .map(|s| scheme.weight(t, s) * actions[(s - 1) as usize] as f64)
        .sum()
}

/// ζₜ and horizon-truncated ζₜ for every `t` in `1..=horizon`, computed once
/// and shared by every episode on the same scheme and horizon.
#[derive(Debug, Clone)]
pub struct ZetaTable {
    scheme: WeightScheme,
    horizon: u64,
    full: Vec<f64>,
    truncated: Vec<f64>,
}

impl ZetaTable {
    pub fn new(scheme: WeightScheme, horizon: u64) -> Result<Self, InterferenceError> {
        let mut full = Vec::with_capacity(horizon as usize);
        let mut truncated = Vec::with_capacity(horizon as usize);
        for t in 1..=horizon {
            full.push(scheme.zeta(t)?);
            truncated.push(scheme.zeta_truncated(t, horizon));
        }
        Ok(Self {
            scheme,
            horizon,
            full,
            truncated,
        })
    }

    pub fn scheme(&self) -> &WeightScheme {
        &self.scheme
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn zeta(&self, t: u64) -> f64 {
        self.full[(t - 1) as usize]
    }

    pub fn zeta_truncated(&self, t: u64) -> f64 {
        self.truncated[(t - 1) as usize]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINEAR: WeightScheme = WeightScheme::GrowingLinear { rho: 0.2 };
    const SQRT: WeightScheme = WeightScheme::GrowingSqrt { rho: 5.0 };
    const POWER: WeightScheme = WeightScheme::GrowingPower {
        scale: 20.0,
        exponent: 0.2,
    };

    #[test]
    fn neighborhood_sizes() {
        assert_eq!(LINEAR.neighborhood_size(100), 20);
        assert_eq!(SQRT.neighborhood_size(100), 50);
        assert_eq!(POWER.neighborhood_size(32), 40);
        assert_eq!(WeightScheme::FixedWindow { window: 7 }.neighborhood_size(3), 7);
        // floored at one
        assert_eq!(LINEAR.neighborhood_size(1), 1);
        assert_eq!(LINEAR.neighborhood_size(4), 1);
    }

    #[test]
    fn weights() {
        let fixed = WeightScheme::FixedWindow { window: 5 };
        assert_eq!(fixed.weight(10, 7), 0.2);
        assert_eq!(fixed.weight(10, 5), 0.2);
        assert_eq!(fixed.weight(10, 4), 0.0);
        assert_eq!(fixed.weight(10, 3), 0.0);
        assert_eq!(fixed.weight(10, 10), 0.0);
        assert_eq!(LINEAR.weight(100, 80), 0.05);
        assert_eq!(LINEAR.weight(100, 79), 0.0);
    }

    #[test]
    fn weights_sum_to_one_once_window_fits() {
        for scheme in [LINEAR, SQRT, POWER, WeightScheme::FixedWindow { window: 5 }] {
            for t in 2..400u64 {
                let total: f64 = (1..t).map(|s| scheme.weight(t, s)).sum();
                assert!(total <= 1.0 + 1e-12);
                if t > scheme.neighborhood_size(t) {
                    assert!((total - 1.0).abs() < 1e-12, "{scheme:?} t={t} sum={total}");
                }
            }
        }
    }

    #[test]
    fn kappa_examples() {
        let mut k = KappaState::new(WeightScheme::FixedWindow { window: 4 });
        assert_eq!(k.next_kappa(), 0.0);
        for a in [0, 0, 1, 0, 1, 1] {
            k.push(a);
        }
        assert_eq!(k.next_kappa(), 0.75);

        let mut ones = KappaState::new(LINEAR);
        let mut zeros = KappaState::new(LINEAR);
        for _ in 0..200 {
            ones.push(1);
            zeros.push(0);
        }
        assert_eq!(ones.next_kappa(), 1.0);
        assert_eq!(zeros.next_kappa(), 0.0);
    }

    #[test]
    fn zeta_fixed_window_is_exactly_one() {
        for n in [1, 5, 20, 50] {
            let s = WeightScheme::FixedWindow { window: n };
            for t in [1, 2, 10, 1000] {
                assert_eq!(s.zeta(t).unwrap(), 1.0);
            }
        }
    }

    #[test]
    fn zeta_truncated_examples() {
        let fixed = WeightScheme::FixedWindow { window: 5 };
        assert_eq!(fixed.zeta_truncated(10, 10), 0.0);
        assert!((fixed.zeta_truncated(10, 12) - 0.4).abs() < 1e-15);
        let full = LINEAR.zeta(100).unwrap();
        assert!((LINEAR.zeta_truncated(100, 1_000_000) - full).abs() < 1e-6);
        assert_eq!(SQRT.zeta_truncated(7, 7), 0.0);
    }

    #[test]
    fn zeta_cap_is_reported() {
        let err = SQRT.zeta_with_cap(100_000, 10).unwrap_err();
        assert_eq!(err, InterferenceError::CapExceeded { t: 100_000, cap: 10 });
    }

    #[test]
    fn linear_scan_ends_at_closed_form_boundary() {
        // for g(s) = floor(ρ s) the influenced set is {t+1, ..., floor(t / (1-ρ))}
        for t in [50u64, 500, 5000] {
            let expected = (t as f64 / 0.8 + 1e-9).floor() as u64;
            assert_eq!(LINEAR.last_influenced(t), expected, "t={t}");
        }
    }

    #[test]
    fn scheme_validation() {
        assert!(LINEAR.validate().is_ok());
        assert!(WeightScheme::GrowingLinear { rho: 1.0 }.validate().is_err());
        assert!(WeightScheme::FixedWindow { window: 0 }.validate().is_err());
        assert!(WeightScheme::GrowingPower {
            scale: 1.0,
            exponent: 1.0
        }
        .validate()
        .is_err());
        assert!(WeightScheme::GrowingSqrt { rho: -1.0 }.validate().is_err());
    }

    #[test]
    fn zeta_table_matches_direct_scan() {
        let table = ZetaTable::new(SQRT, 300).unwrap();
        for t in [1u64, 17, 150, 300] {
            assert_eq!(table.zeta(t), SQRT.zeta(t).unwrap());
            assert_eq!(table.zeta_truncated(t), SQRT.zeta_truncated(t, 300));
        }
    }
}
