//! Stationary ergodic edge-weight fields on E(Z), generated deterministically
//! from a seed.
//!
//! Weights are attached to the undirected edges e_{k,k+1} of Z and are a pure
//! function of (spec, shift, k): a counter-based generator keyed by the edge
//! index, so the same realization can be queried at any index, in any order,
//! and across boxes of different sizes. Sequential generators cannot do that.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{counter_word, mix64, u01};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    IidUniform,
    IidRademacher,
    RandomPhasePeriodic,
    FiniteRangeMa,
}

/// Serializable description of a field law: {kind, c, period, range, seed}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub kind: FieldKind,
    /// Amplitude. The uniform bound is `c` for the iid and periodic kinds and
    /// `c * range` for the moving average.
    pub c: f64,
    /// Period of the random-phase square wave (even, >= 2). Ignored by the
    /// other kinds.
    #[serde(default = "default_period")]
    pub period: i64,
    /// Window length of the moving average (>= 1). Ignored by the others.
    #[serde(default = "default_range")]
    pub range: i64,
    pub seed: u64,
}

fn default_period() -> i64 {
    2
}

fn default_range() -> i64 {
    1
}

impl FieldSpec {
    pub fn iid_uniform(c: f64, seed: u64) -> Self {
        FieldSpec { kind: FieldKind::IidUniform, c, period: 2, range: 1, seed }
    }

    pub fn iid_rademacher(c: f64, seed: u64) -> Self {
        FieldSpec { kind: FieldKind::IidRademacher, c, period: 2, range: 1, seed }
    }

    /// The amplitude-zero field; its Gibbs measure is the uniform measure.
    pub fn zero() -> Self {
        FieldSpec::iid_uniform(0.0, 0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c >= 0.0) {
            return Err(Error::validation("field.c", "amplitude c >= 0 required"));
        }
        match self.kind {
            FieldKind::RandomPhasePeriodic => {
                if self.period < 2 || self.period % 2 != 0 {
                    return Err(Error::validation(
                        "field.period",
                        "even period >= 2 required for the mean to vanish",
                    ));
                }
            }
            FieldKind::FiniteRangeMa
                if self.range < 1 => {
                    return Err(Error::validation("field.range", "range >= 1 required"));
                }
            _ => {}
        }
        Ok(())
    }

    /// The uniform bound C with |w_e| <= C almost surely.
    pub fn c_omega(&self) -> f64 {
        match self.kind {
            FieldKind::FiniteRangeMa => self.c * self.range as f64,
            _ => self.c,
        }
    }

    /// Derives a new spec with seed taken from a master seed and task index.
    pub fn reseeded(&self, seed: u64) -> Self {
        let mut s = self.clone();
        s.seed = seed;
        s
    }

    fn effective_seed(&self) -> u64 {
        let tag = match self.kind {
            FieldKind::IidUniform => 0x11d0,
            FieldKind::IidRademacher => 0x11d1,
            FieldKind::RandomPhasePeriodic => 0x9e10,
            FieldKind::FiniteRangeMa => 0x3a30,
        };
        mix64(self.seed ^ mix64(tag ^ (self.period as u64).wrapping_mul(0x10001) ^ (self.range as u64)))
    }

    fn raw(&self, k: i64) -> f64 {
        let seed = self.effective_seed();
        match self.kind {
            FieldKind::IidUniform => self.c * (2.0 * u01(counter_word(seed, k)) - 1.0),
            FieldKind::IidRademacher => {
                if counter_word(seed, k) >> 63 == 0 {
                    self.c
                } else {
                    -self.c
                }
            }
            FieldKind::RandomPhasePeriodic => {
                // Square wave with a uniformly random phase: the phase drawn
                // once from the seed makes the pattern stationary.
                let phase = (counter_word(seed, i64::MIN) % self.period as u64) as i64;
                if (k + phase).rem_euclid(self.period) < self.period / 2 {
                    self.c
                } else {
                    -self.c
                }
            }
            FieldKind::FiniteRangeMa => {
                let mut acc = 0.0;
                for j in 0..self.range {
                    acc += 2.0 * u01(counter_word(seed, k + j)) - 1.0;
                }
                self.c * acc
            }
        }
    }
}

/// Anything that assigns a bounded weight to each height edge of Z.
///
/// The exact engines only see this trait, so alternative weightings (e.g.
/// constant-shifted fields in the identity tests) can be swapped in.
pub trait EdgeField: Sync {
    fn weight(&self, k: i64) -> f64;
    /// A uniform bound on |weight|.
    fn bound(&self) -> f64;
    /// Identifies the realization in reports.
    fn fingerprint(&self) -> u64;
}

/// A realization of a field spec together with an accumulated shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    spec: FieldSpec,
    shift: i64,
}

impl Field {
    pub fn new(spec: FieldSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Field { spec, shift: 0 })
    }

    pub fn zero() -> Self {
        Field { spec: FieldSpec::zero(), shift: 0 }
    }

    pub fn spec(&self) -> &FieldSpec {
        &self.spec
    }

    pub fn shift(&self) -> i64 {
        self.shift
    }

    pub fn c_omega(&self) -> f64 {
        self.spec.c_omega()
    }

    /// Weight of the edge e_{k,k+1}.
    pub fn at(&self, k: i64) -> f64 {
        self.spec.raw(k + self.shift)
    }

    /// The field translated by z: `shifted(z).at(k) == self.at(k + z)`.
    pub fn shifted(&self, z: i64) -> Field {
        Field { spec: self.spec.clone(), shift: self.shift + z }
    }

    /// The slope-directed shift used by the translation semigroup:
    /// a shift by floor(u . s).
    pub fn slope_shifted(&self, u: &[i64], s: &crate::boundary::Slope) -> Field {
        self.shifted(s.floor_dot(u))
    }
}

impl EdgeField for Field {
    fn weight(&self, k: i64) -> f64 {
        self.at(k)
    }

    fn bound(&self) -> f64 {
        self.c_omega()
    }

    fn fingerprint(&self) -> u64 {
        let mut h = self.spec.effective_seed();
        h = mix64(h ^ self.spec.c.to_bits());
        h = mix64(h ^ self.shift as u64);
        h
    }
}

/// A field with a constant added to every edge weight.
pub struct WithOffset<'a, F: EdgeField> {
    pub inner: &'a F,
    pub offset: f64,
}

impl<F: EdgeField> EdgeField for WithOffset<'_, F> {
    fn weight(&self, k: i64) -> f64 {
        self.inner.weight(k) + self.offset
    }

    fn bound(&self) -> f64 {
        self.inner.bound() + self.offset.abs()
    }

    fn fingerprint(&self) -> u64 {
        mix64(self.inner.fingerprint() ^ self.offset.to_bits())
    }
}

/// The all-zero field as a trait object-friendly unit.
pub struct ZeroField;

impl EdgeField for ZeroField {
    fn weight(&self, _k: i64) -> f64 {
        0.0
    }

    fn bound(&self) -> f64 {
        0.0
    }

    fn fingerprint(&self) -> u64 {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds() -> Vec<FieldSpec> {
        vec![
            FieldSpec::iid_uniform(0.7, 11),
            FieldSpec::iid_rademacher(1.0, 12),
            FieldSpec { kind: FieldKind::RandomPhasePeriodic, c: 0.5, period: 2, range: 1, seed: 13 },
            FieldSpec { kind: FieldKind::FiniteRangeMa, c: 0.25, period: 2, range: 4, seed: 14 },
        ]
    }

    #[test]
    fn bounded_exactly_over_a_large_window() {
        for spec in kinds() {
            let f = Field::new(spec.clone()).unwrap();
            let c = f.c_omega();
            for k in -500_000i64..500_000 {
                assert!(f.at(k).abs() <= c, "{spec:?} at {k}");
            }
        }
    }

    #[test]
    fn rademacher_support() {
        let f = Field::new(FieldSpec::iid_rademacher(1.0, 99)).unwrap();
        for k in -1000..1000 {
            let v = f.at(k);
            assert!(v == 1.0 || v == -1.0);
        }
    }

    #[test]
    fn periodic_pattern_cancels_in_pairs() {
        for seed in 0..20 {
            let f = Field::new(FieldSpec {
                kind: FieldKind::RandomPhasePeriodic,
                c: 0.8,
                period: 2,
                range: 1,
                seed,
            })
            .unwrap();
            for k in -50..50 {
                assert_eq!(f.at(k) + f.at(k + 1), 0.0);
            }
        }
    }

    #[test]
    fn empirical_mean_obeys_lln() {
        let n = 100_000i64;
        for spec in kinds() {
            let f = Field::new(spec.clone()).unwrap();
            let mean = (0..n).map(|k| f.at(k)).sum::<f64>() / n as f64;
            let tol = 3.0 * f.c_omega() / (n as f64).sqrt();
            assert!(mean.abs() < tol, "{spec:?}: mean {mean} tol {tol}");
        }
    }

    #[test]
    fn reproducible_streams() {
        for spec in kinds() {
            let a = Field::new(spec.clone()).unwrap();
            let b = Field::new(spec.clone()).unwrap();
            for k in -100..100 {
                assert_eq!(a.at(k).to_bits(), b.at(k).to_bits());
            }
        }
    }

    #[test]
    fn shift_semigroup_laws() {
        let f = Field::new(FieldSpec::iid_uniform(1.0, 5)).unwrap();
        // Identity.
        assert_eq!(f.shifted(0), f);
        for k in -100..100 {
            // Values return after a round trip.
            assert_eq!(f.shifted(7).shifted(-7).at(k), f.at(k));
            // Composition.
            assert_eq!(f.shifted(3 + 11).at(k), f.shifted(3).shifted(11).at(k));
            // Action on values.
            assert_eq!(f.shifted(9).at(k), f.at(k + 9));
        }
    }

    #[test]
    fn slope_shift_floors_the_dot_product() {
        use crate::boundary::Slope;
        let f = Field::new(FieldSpec::iid_uniform(1.0, 5)).unwrap();
        let s = Slope::new(vec![0.5, 0.25]).unwrap();
        assert_eq!(f.slope_shifted(&[3, 4], &s), f.shifted(2)); // floor(2.5) = 2
        assert_eq!(f.slope_shifted(&[0, 0], &s), f.shifted(0));
        let s0 = Slope::zero(2);
        assert_eq!(f.slope_shifted(&[17, -4], &s0), f.clone());
        let e1 = Slope::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(f.slope_shifted(&[1, 0], &e1), f.shifted(1));
    }

    #[test]
    fn pair_distribution_is_stationary() {
        // Sign-quadrant histogram of (w_k, w_{k+1}) in two distant windows.
        let f = Field::new(FieldSpec::iid_uniform(1.0, 314)).unwrap();
        let n = 200_000i64;
        let hist = |start: i64| {
            let mut bins = [0usize; 4];
            for k in start..start + n {
                let b = ((f.at(k) > 0.0) as usize) << 1 | (f.at(k + 1) > 0.0) as usize;
                bins[b] += 1;
            }
            bins
        };
        let a = hist(0);
        let b = hist(1_000_000);
        for i in 0..4 {
            let pa = a[i] as f64 / n as f64;
            let pb = b[i] as f64 / n as f64;
            assert!((pa - pb).abs() < 4.0 / (n as f64).sqrt() * 2.0, "bin {i}: {pa} vs {pb}");
        }
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = FieldSpec { kind: FieldKind::FiniteRangeMa, c: 0.25, period: 2, range: 4, seed: 7 };
        let s = serde_json::to_string(&spec).unwrap();
        let back: FieldSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(spec, back);
        // Defaults fill in for the iid kinds.
        let spec: FieldSpec =
            serde_json::from_str(r#"{"kind":"iid_uniform","c":0.5,"seed":1}"#).unwrap();
        assert_eq!(spec.period, 2);
        assert_eq!(spec.range, 1);
    }
}
