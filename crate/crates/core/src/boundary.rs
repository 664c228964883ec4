//! Canonical sloped boundary data and the boundary-profile convergence
//! metric.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{l1_dist, site_parity, BoundaryHeightFunction, LatticeBox, Site};

/// A slope vector with |s|_inf <= 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slope(Vec<f64>);

impl Slope {
    pub fn new(s: Vec<f64>) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::validation("s", "slope must have at least one component"));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("s", "slope components must be finite"));
        }
        let slope = Slope(s);
        if slope.linf() > 1.0 {
            return Err(Error::validation("s", "|s|_inf <= 1 required"));
        }
        Ok(slope)
    }

    pub fn zero(m: usize) -> Self {
        Slope(vec![0.0; m])
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn linf(&self) -> f64 {
        self.0.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// Fails unless |s|_inf < 1; several operations blow up on the frozen
    /// faces of the slope cube.
    pub fn require_strict(&self, param: &str) -> Result<()> {
        if self.linf() >= 1.0 {
            return Err(Error::validation(param, "|s|_inf < 1 required"));
        }
        Ok(())
    }

    pub fn dot(&self, x: &[i64]) -> f64 {
        self.0.iter().zip(x).map(|(s, v)| s * *v as f64).sum()
    }

    /// floor(s . x), the linear target heights are rounded from.
    pub fn floor_dot(&self, x: &[i64]) -> i64 {
        self.dot(x).floor() as i64
    }
}

/// Rounds the target to the nearest integer of the requested parity, ties
/// upward. Since both admissible neighbors of a wrong-parity target are
/// equidistant, this means: keep the target if the parity matches, else
/// target + 1.
fn round_to_parity(target: i64, parity: i64) -> i64 {
    if target.rem_euclid(2) == parity {
        target
    } else {
        target + 1
    }
}

/// The canonical boundary height function of slope `s` on `bbox`.
///
/// Values are floor(s.x) rounded into the parity class h(x) = |x|_1 (mod 2),
/// which minimizes sum |h(x) - floor(s.x)| pointwise. A lexicographic
/// clamping pass then enforces pairwise extendability; for |s|_inf <= 1 the
/// rounded values are already pairwise consistent and the pass never moves
/// anything, but it is kept as a guard for the contract.
pub fn canonical_boundary(bbox: &LatticeBox, s: &Slope) -> Result<BoundaryHeightFunction> {
    if s.dim() != bbox.dim() {
        return Err(Error::validation("s", "slope dimension must match box dimension"));
    }
    // Slope::new enforces |s|_inf <= 1 already; re-check for hand-built values.
    if s.linf() > 1.0 {
        return Err(Error::validation("s", "|s|_inf <= 1 required"));
    }
    let sites = bbox.inner_boundary();
    let mut fixed: Vec<(Site, i64)> = Vec::with_capacity(sites.len());
    for x in sites {
        let mut v = round_to_parity(s.floor_dot(&x), site_parity(&x));
        // Feasible interval from already-fixed sites. Both interval ends have
        // the parity of x, so clamping preserves the parity class.
        let mut lo = i64::MIN;
        let mut hi = i64::MAX;
        for (y, hy) in &fixed {
            let d = l1_dist(&x, y);
            lo = lo.max(hy - d);
            hi = hi.min(hy + d);
        }
        debug_assert!(lo <= hi, "prefix of canonical boundary became inconsistent");
        let clamped = v.clamp(lo, hi);
        debug_assert_eq!(clamped, v, "rounded canonical value needed clamping");
        v = clamped;
        fixed.push((x, v));
    }
    let values = fixed.iter().map(|(_, v)| *v).collect();
    let hb = BoundaryHeightFunction::new(bbox.clone(), values)?;
    debug_assert!(hb.check_extendable().is_ok());
    Ok(hb)
}

/// Macroscopic boundary profiles the convergence metric compares against.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryProfile {
    Affine { slope: Vec<f64>, offset: f64 },
    Constant { value: f64 },
}

impl BoundaryProfile {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            BoundaryProfile::Affine { slope, offset } => {
                offset + slope.iter().zip(x).map(|(s, v)| s * v).sum::<f64>()
            }
            BoundaryProfile::Constant { value } => *value,
        }
    }
}

/// Distance between rescaled boundary data and a macroscopic profile:
/// sup over boundary sites z (with non-empty patch) of
/// sup_{x in S(z)} |h(z)/n - profile(x)|, where S(z) is the portion of the
/// boundary of the rescaled box within l_inf distance 1/(2n) of z/n.
pub fn boundary_profile_distance(
    hb: &BoundaryHeightFunction,
    profile: &BoundaryProfile,
    n: i64,
) -> Result<f64> {
    if n < 1 {
        return Err(Error::validation("n", "n >= 1 required"));
    }
    if hb.is_empty() {
        return Err(Error::validation("hb", "empty boundary"));
    }
    let bbox = hb.bbox();
    let m = bbox.dim();
    let nf = n as f64;
    let rlo: Vec<f64> = bbox.lo().iter().map(|v| *v as f64 / nf).collect();
    let rhi: Vec<f64> = bbox.hi().iter().map(|v| (*v - 1) as f64 / nf).collect();
    let half = 1.0 / (2.0 * nf);

    let mut best = f64::NEG_INFINITY;
    let mut any_patch = false;
    for (z, hz) in hb.iter() {
        let center: Vec<f64> = z.iter().map(|v| *v as f64 / nf).collect();
        let level = hz as f64 / nf;
        // Each face of the rescaled box clipped to the l_inf ball around z/n.
        for axis in 0..m {
            for face in [rlo[axis], rhi[axis]] {
                if (center[axis] - face).abs() > half + 1e-12 {
                    continue;
                }
                // Patch ranges along the other axes.
                let mut ranges = Vec::with_capacity(m - 1);
                let mut empty = false;
                for j in 0..m {
                    if j == axis {
                        continue;
                    }
                    let lo = rlo[j].max(center[j] - half);
                    let hi = rhi[j].min(center[j] + half);
                    if lo > hi + 1e-12 {
                        empty = true;
                        break;
                    }
                    ranges.push((lo, hi.max(lo)));
                }
                if empty {
                    continue;
                }
                any_patch = true;
                // Profiles here are affine, so the sup over the patch is
                // attained at a corner.
                let corners = 1usize << ranges.len();
                for mask in 0..corners {
                    let mut x = vec![0.0; m];
                    x[axis] = face;
                    let mut r = 0;
                    for j in 0..m {
                        if j == axis {
                            continue;
                        }
                        x[j] = if mask >> r & 1 == 0 { ranges[r].0 } else { ranges[r].1 };
                        r += 1;
                    }
                    best = best.max((level - profile.eval(&x)).abs());
                }
            }
        }
    }
    if !any_patch {
        return Err(Error::validation("hb", "no boundary site meets the rescaled boundary"));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::kirszbraun_envelope;

    #[test]
    fn slope_validation() {
        assert!(Slope::new(vec![1.5, 0.0]).is_err());
        assert!(Slope::new(vec![1.0, -1.0]).is_ok());
        assert!(Slope::new(vec![0.3]).unwrap().require_strict("s").is_ok());
        assert!(Slope::new(vec![1.0]).unwrap().require_strict("s").is_err());
    }

    #[test]
    fn canonical_s3_zero_slope() {
        let b = LatticeBox::cube(2, 3).unwrap();
        let hb = canonical_boundary(&b, &Slope::zero(2)).unwrap();
        for (x, v) in hb.iter() {
            assert_eq!(v, site_parity(x), "site {x:?}");
        }
    }

    #[test]
    fn canonical_1d_zero_slope_endpoints() {
        let b = LatticeBox::new(vec![0], vec![5]).unwrap();
        let hb = canonical_boundary(&b, &Slope::zero(1)).unwrap();
        assert_eq!(hb.value(&[0]), Some(0));
        assert_eq!(hb.value(&[4]), Some(0));
    }

    #[test]
    fn canonical_envelope_on_s3() {
        let b = LatticeBox::cube(2, 3).unwrap();
        let hb = canonical_boundary(&b, &Slope::zero(2)).unwrap();
        let env = kirszbraun_envelope(&b, &hb).unwrap();
        let center = b.index_of(&[1, 1]);
        assert_eq!(env.h_min[center], 0);
        assert_eq!(env.h_max[center], 2);
    }

    /// Exhaustive minimizer over all extendable boundary functions of the
    /// canonical parity class, values within a window around the targets.
    fn brute_force_optimum(bbox: &LatticeBox, s: &Slope) -> i64 {
        let sites = bbox.inner_boundary();
        let targets: Vec<i64> = sites.iter().map(|x| s.floor_dot(x)).collect();
        let mut best = i64::MAX;
        let k = sites.len();
        let mut choice = vec![0usize; k];
        // Each site ranges over 5 candidate values of correct parity around
        // its target; that window certainly contains the optimum.
        let cands: Vec<Vec<i64>> = sites
            .iter()
            .zip(&targets)
            .map(|(x, t)| {
                let base = round_to_parity(*t, site_parity(x));
                (-2..=2).map(|j| base + 2 * j).collect()
            })
            .collect();
        'outer: loop {
            let values: Vec<i64> = (0..k).map(|i| cands[i][choice[i]]).collect();
            let ok = (0..k).all(|i| {
                (i + 1..k).all(|j| {
                    let d = l1_dist(&sites[i], &sites[j]);
                    (values[i] - values[j]).abs() <= d
                })
            });
            if ok {
                let cost: i64 = (0..k).map(|i| (values[i] - targets[i]).abs()).sum();
                best = best.min(cost);
            }
            // Next choice vector.
            for i in 0..k {
                choice[i] += 1;
                if choice[i] < cands[i].len() {
                    continue 'outer;
                }
                choice[i] = 0;
            }
            break;
        }
        best
    }

    #[test]
    fn canonical_matches_brute_force_on_small_boxes() {
        let slopes = [
            Slope::zero(2),
            Slope::new(vec![1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt()]).unwrap(),
            Slope::new(vec![0.3, -0.7]).unwrap(),
            Slope::new(vec![-0.9, 0.2]).unwrap(),
        ];
        for s in &slopes {
            for bbox in [LatticeBox::cube(2, 2).unwrap(), LatticeBox::cube(2, 3).unwrap()] {
                let hb = canonical_boundary(&bbox, s).unwrap();
                let cost: i64 = hb.iter().map(|(x, v)| (v - s.floor_dot(x)).abs()).sum();
                assert_eq!(cost, brute_force_optimum(&bbox, s), "slope {s:?} box {bbox:?}");
            }
        }
    }

    #[test]
    fn canonical_is_deterministic() {
        let b = LatticeBox::cube(2, 7).unwrap();
        let s = Slope::new(vec![0.37, -0.61]).unwrap();
        let a = canonical_boundary(&b, &s).unwrap();
        let c = canonical_boundary(&b, &s).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn profile_distance_zero_for_matching_constants() {
        let b = LatticeBox::new(vec![0], vec![9]).unwrap();
        let hb = BoundaryHeightFunction::new(b, vec![0, 0]).unwrap();
        let d = boundary_profile_distance(&hb, &BoundaryProfile::Constant { value: 0.0 }, 8)
            .unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn profile_distance_constant_offset() {
        // h = n on the boundary against the zero profile: distance exactly 1.
        let n = 8;
        let b = LatticeBox::new(vec![0], vec![9]).unwrap();
        let hb = BoundaryHeightFunction::new(b, vec![n, n]).unwrap();
        let d = boundary_profile_distance(&hb, &BoundaryProfile::Constant { value: 0.0 }, n)
            .unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn profile_distance_of_canonical_boundary_is_small() {
        // Rounded linear boundary data vs the linear profile: within 2/n.
        for (sx, sy, n) in [(0.0, 0.0, 10i64), (0.4, -0.3, 12), (0.7, 0.2, 20)] {
            let b = LatticeBox::cube(2, n).unwrap();
            let s = Slope::new(vec![sx, sy]).unwrap();
            let hb = canonical_boundary(&b, &s).unwrap();
            let profile = BoundaryProfile::Affine { slope: vec![sx, sy], offset: 0.0 };
            let d = boundary_profile_distance(&hb, &profile, n).unwrap();
            assert!(d <= 2.0 / n as f64 + 1e-12, "slope ({sx},{sy}) n={n}: d={d}");
        }
    }
}
