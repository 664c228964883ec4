//! Heat-bath dynamics for the quenched Gibbs measure on boxes too large to
//! enumerate, plus the profile-ball membership tests used by the
//! concentration experiments.
//!
//! Updates resample one interior site from its exact conditional law, so the
//! kernel fixes the Gibbs measure site by site. Boundary sites stay frozen.

use serde::{Deserialize, Serialize};

use crate::boundary::{canonical_boundary, BoundaryProfile, Slope};
use crate::error::{Error, Result};
use crate::field::EdgeField;
use crate::lattice::{kirszbraun_extend, BoundaryHeightFunction, HeightFunction, LatticeBox};
use crate::util::SeqRng;

/// A running chain: the current configuration plus its RNG stream.
#[derive(Debug, Clone)]
pub struct ChainState {
    current: HeightFunction,
    rng: SeqRng,
    sweep: u64,
    interior: Vec<usize>,
    neighbors: Vec<Vec<usize>>,
    random_scan: bool,
}

impl ChainState {
    /// Starts from the maximal Kirszbraun extension of the boundary data.
    pub fn new(
        bbox: &LatticeBox,
        hb: &BoundaryHeightFunction,
        seed: u64,
        random_scan: bool,
    ) -> Result<Self> {
        let current = kirszbraun_extend(bbox, hb)?;
        let m = bbox.dim();
        let mut strides = vec![1usize; m];
        for i in 1..m {
            strides[i] = strides[i - 1] * bbox.extent(i - 1) as usize;
        }
        let mut interior = Vec::new();
        let mut neighbors = Vec::new();
        for (idx, x) in bbox.sites().enumerate() {
            if bbox.is_inner_boundary(&x) {
                continue;
            }
            interior.push(idx);
            // Interior sites have all 2m neighbors inside the box.
            let mut nbrs = Vec::with_capacity(2 * m);
            for i in 0..m {
                nbrs.push(idx - strides[i]);
                nbrs.push(idx + strides[i]);
            }
            neighbors.push(nbrs);
        }
        Ok(ChainState {
            current,
            rng: SeqRng::new(seed),
            sweep: 0,
            interior,
            neighbors,
            random_scan,
        })
    }

    pub fn current(&self) -> &HeightFunction {
        &self.current
    }

    pub fn sweeps_done(&self) -> u64 {
        self.sweep
    }

    pub fn interior_count(&self) -> usize {
        self.interior.len()
    }

    /// One sweep: every interior site visited once (raster order, or a
    /// uniformly random site per step under random scan). A site whose
    /// neighbors do not all agree is forced and left unchanged; otherwise it
    /// resamples from the exact conditional law.
    pub fn heat_bath_sweep<F: EdgeField + ?Sized>(&mut self, field: &F) {
        let k = self.interior.len();
        for step in 0..k {
            let pos = if self.random_scan { self.rng.below(k as u64) as usize } else { step };
            let idx = self.interior[pos];
            let nbrs = &self.neighbors[pos];
            let values = self.current.values();
            let a = values[nbrs[0]];
            if nbrs[1..].iter().any(|&j| values[j] != a) {
                continue;
            }
            let deg = nbrs.len() as f64;
            // Candidates a-1 and a+1; per edge the height-edge index is a-1
            // for the low candidate and a for the high one.
            let w_up = deg * field.weight(a);
            let w_down = deg * field.weight(a - 1);
            let p_up = 1.0 / (1.0 + (w_down - w_up).exp());
            let v = if self.rng.next_f64() < p_up { a + 1 } else { a - 1 };
            self.current.values_mut()[idx] = v;
        }
        self.sweep += 1;
        debug_assert!(self.current.check_valid().is_ok());
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleParams {
    pub samples: usize,
    /// Sweeps before the first recorded sample; default 100 x interior sites.
    pub burn_in: Option<u64>,
    /// Sweeps between recorded samples.
    pub thin: u64,
    pub seed: u64,
    pub random_scan: bool,
}

impl SampleParams {
    pub fn new(samples: usize, seed: u64) -> Self {
        SampleParams { samples, burn_in: None, thin: 10, seed, random_scan: false }
    }
}

/// Draws `samples` configurations from the chain. With `burn_in = 0` and
/// `thin = 0` the first sample is the Kirszbraun extension itself.
pub fn sample<F: EdgeField + ?Sized>(
    bbox: &LatticeBox,
    hb: &BoundaryHeightFunction,
    field: &F,
    params: &SampleParams,
) -> Result<Vec<HeightFunction>> {
    let mut chain = ChainState::new(bbox, hb, params.seed, params.random_scan)?;
    let burn_in = params.burn_in.unwrap_or(100 * chain.interior_count() as u64);
    for _ in 0..burn_in {
        chain.heat_bath_sweep(field);
    }
    let mut out = Vec::with_capacity(params.samples);
    for i in 0..params.samples {
        if i > 0 {
            for _ in 0..params.thin {
                chain.heat_bath_sweep(field);
            }
        }
        out.push(chain.current().clone());
    }
    Ok(out)
}

/// A ball around an asymptotic height profile: membership means the rescaled
/// heights stay within delta of the profile on the eps-grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HpBallSpec {
    pub profile: BoundaryProfile,
    pub delta: f64,
    pub eps: f64,
}

impl HpBallSpec {
    pub fn validate(&self) -> Result<()> {
        if self.delta.is_nan() || self.delta <= 0.0 {
            return Err(Error::validation("delta", "delta > 0 required"));
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(Error::validation("eps", "eps > 0 required"));
        }
        if let BoundaryProfile::Affine { slope, .. } = &self.profile {
            if slope.iter().fold(0.0f64, |a, v| a.max(v.abs())) > 1.0 {
                return Err(Error::validation("profile", "profile must be 1-Lipschitz (l1)"));
            }
        }
        Ok(())
    }

    /// True iff some coordinate of x/n lies on the eps-grid (|coord| a
    /// multiple of eps).
    fn on_grid(&self, x: &[i64], n: i64) -> bool {
        x.iter().any(|&c| {
            let v = (c as f64 / n as f64).abs();
            let r = v / self.eps;
            (r - r.round()).abs() * self.eps < 1e-9
        })
    }
}

/// sup over grid sites of |h(x)/n - profile(x/n)| <= delta. Errors when the
/// eps-grid misses the box entirely.
pub fn hp_ball_contains(h: &HeightFunction, ball: &HpBallSpec, n: i64) -> Result<bool> {
    ball.validate()?;
    if n < 1 {
        return Err(Error::validation("n", "n >= 1 required"));
    }
    let bbox = h.bbox();
    let mut any = false;
    let mut sup: f64 = 0.0;
    for (idx, x) in bbox.sites().enumerate() {
        if !ball.on_grid(&x, n) {
            continue;
        }
        any = true;
        let rescaled: Vec<f64> = x.iter().map(|&c| c as f64 / n as f64).collect();
        let dev = (h.value_at_index(idx) as f64 / n as f64 - ball.profile.eval(&rescaled)).abs();
        sup = sup.max(dev);
    }
    if !any {
        return Err(Error::validation("eps", "eps-grid misses every site; decrease eps"));
    }
    Ok(sup <= ball.delta)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub samples: usize,
    pub in_ball: usize,
    pub fraction: f64,
}

/// Fraction of post-burn-in samples inside the HP ball around the affine
/// profile x -> s.x, with the canonical boundary of slope s on S_n.
pub fn concentration_experiment<F: EdgeField + ?Sized>(
    s: &Slope,
    n: i64,
    field: &F,
    delta: f64,
    eps: f64,
    params: &SampleParams,
) -> Result<ConcentrationReport> {
    let bbox = LatticeBox::cube(s.dim(), n)?;
    let hb = canonical_boundary(&bbox, s)?;
    let ball = HpBallSpec {
        profile: BoundaryProfile::Affine { slope: s.components().to_vec(), offset: 0.0 },
        delta,
        eps,
    };
    ball.validate()?;
    let draws = sample(&bbox, &hb, field, params)?;
    let mut in_ball = 0usize;
    for h in &draws {
        if hp_ball_contains(h, &ball, n)? {
            in_ball += 1;
        }
    }
    Ok(ConcentrationReport {
        samples: draws.len(),
        in_ball,
        fraction: in_ball as f64 / draws.len().max(1) as f64,
    })
}

/// The dense one-sweep transition kernel on the exact configuration set of a
/// small box: the product of the per-site heat-bath kernels in raster order.
/// Row i is the distribution after one sweep started from configuration i.
pub fn sweep_kernel<F: EdgeField + ?Sized>(
    bbox: &LatticeBox,
    hb: &BoundaryHeightFunction,
    field: &F,
    cap: usize,
) -> Result<(Vec<HeightFunction>, Vec<Vec<f64>>)> {
    let configs = crate::gibbs::enumerate_extensions(bbox, hb, cap)?;
    if configs.is_empty() {
        return Err(Error::EmptyConfigurationSet("no extensions".into()));
    }
    let index: std::collections::BTreeMap<Vec<i64>, usize> = configs
        .iter()
        .enumerate()
        .map(|(i, h)| (h.values().to_vec(), i))
        .collect();
    let template = ChainState::new(bbox, hb, 0, false)?;
    let k = configs.len();
    let mut kernel = vec![vec![0.0; k]; k];
    for (start, h0) in configs.iter().enumerate() {
        // Branching evolution of a distribution over configurations.
        let mut dist: std::collections::BTreeMap<Vec<i64>, f64> =
            [(h0.values().to_vec(), 1.0)].into_iter().collect();
        for (pos, &idx) in template.interior.iter().enumerate() {
            let nbrs = &template.neighbors[pos];
            let mut next: std::collections::BTreeMap<Vec<i64>, f64> =
                std::collections::BTreeMap::new();
            for (values, p) in dist {
                let a = values[nbrs[0]];
                if nbrs[1..].iter().any(|&j| values[j] != a) {
                    *next.entry(values).or_insert(0.0) += p;
                    continue;
                }
                let deg = nbrs.len() as f64;
                let w_up = deg * field.weight(a);
                let w_down = deg * field.weight(a - 1);
                let p_up = 1.0 / (1.0 + (w_down - w_up).exp());
                let mut up = values.clone();
                up[idx] = a + 1;
                let mut down = values;
                down[idx] = a - 1;
                *next.entry(up).or_insert(0.0) += p * p_up;
                *next.entry(down).or_insert(0.0) += p * (1.0 - p_up);
            }
            dist = next;
        }
        for (values, p) in dist {
            let j = *index.get(&values).expect("sweep leaves the configuration set");
            kernel[start][j] += p;
        }
    }
    Ok((configs, kernel))
}

/// Total variation distance between an empirical sample and exact
/// probabilities over an enumerated configuration set.
pub fn empirical_tv_distance(
    configs: &[HeightFunction],
    probs: &[f64],
    draws: &[HeightFunction],
) -> f64 {
    let index: std::collections::BTreeMap<Vec<i64>, usize> = configs
        .iter()
        .enumerate()
        .map(|(i, h)| (h.values().to_vec(), i))
        .collect();
    let mut counts = vec![0usize; configs.len()];
    for d in draws {
        if let Some(&i) = index.get(&d.values().to_vec()) {
            counts[i] += 1;
        }
    }
    let n = draws.len() as f64;
    0.5 * probs
        .iter()
        .enumerate()
        .map(|(i, p)| (counts[i] as f64 / n - p).abs())
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Field, FieldSpec, ZeroField};
    use crate::gibbs::exact_distribution;

    struct TableField(std::collections::BTreeMap<i64, f64>);

    impl EdgeField for TableField {
        fn weight(&self, k: i64) -> f64 {
            self.0.get(&k).copied().unwrap_or(0.0)
        }

        fn bound(&self) -> f64 {
            self.0.values().fold(0.0f64, |a, v| a.max(v.abs()))
        }

        fn fingerprint(&self) -> u64 {
            0xbeef
        }
    }

    #[test]
    fn zero_sweeps_returns_kirszbraun_extension() {
        let b = LatticeBox::cube(2, 4).unwrap();
        let hb = canonical_boundary(&b, &Slope::zero(2)).unwrap();
        let params = SampleParams { samples: 1, burn_in: Some(0), thin: 0, seed: 1, random_scan: false };
        let draws = sample(&b, &hb, &ZeroField, &params).unwrap();
        assert_eq!(draws[0], kirszbraun_extend(&b, &hb).unwrap());
    }

    #[test]
    fn seed_determinism() {
        let b = LatticeBox::cube(2, 5).unwrap();
        let hb = canonical_boundary(&b, &Slope::zero(2)).unwrap();
        let f = Field::new(FieldSpec::iid_uniform(0.5, 9)).unwrap();
        let params = SampleParams::new(20, 77);
        let a = sample(&b, &hb, &f, &params).unwrap();
        let c = sample(&b, &hb, &f, &params).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn forced_sites_never_move() {
        // Slope 1 freezes everything; the chain must stay at the staircase.
        let s = Slope::new(vec![1.0, 0.0]).unwrap();
        let b = LatticeBox::cube(2, 4).unwrap();
        let hb = canonical_boundary(&b, &s).unwrap();
        let f = Field::new(FieldSpec::iid_uniform(1.0, 3)).unwrap();
        let start = kirszbraun_extend(&b, &hb).unwrap();
        let mut chain = ChainState::new(&b, &hb, 5, false).unwrap();
        for _ in 0..50 {
            chain.heat_bath_sweep(&f);
        }
        // Not everything is forced at slope (1,0), but heights remain valid
        // and boundary-pinned; with full freeze check the frozen diagonal:
        for (x, v) in hb.iter() {
            assert_eq!(chain.current().value(x), v);
        }
        assert!(chain.current().check_valid().is_ok());
        let _ = start;
    }

    #[test]
    fn single_site_conditional_matches_two_point_law() {
        // S_3 center with neighbors all 1, w0 = beta, w1 = 0:
        // P(center = 0) = e^{4 beta} / (e^{4 beta} + 1).
        let b = LatticeBox::cube(2, 3).unwrap();
        let hb = canonical_boundary(&b, &Slope::zero(2)).unwrap();
        let beta = 0.6;
        let f = TableField([(0, beta)].into_iter().collect());
        let params = SampleParams { samples: 20000, burn_in: Some(50), thin: 1, seed: 11, random_scan: false };
        let draws = sample(&b, &hb, &f, &params).unwrap();
        let center = b.index_of(&[1, 1]);
        let p0 = draws.iter().filter(|h| h.values()[center] == 0).count() as f64
            / draws.len() as f64;
        let expect = (4.0 * beta).exp() / ((4.0 * beta).exp() + 1.0);
        // Binomial 3 sigma.
        let sigma = (expect * (1.0 - expect) / draws.len() as f64).sqrt();
        assert!((p0 - expect).abs() < 4.0 * sigma, "{p0} vs {expect} (sigma {sigma})");
    }

    #[test]
    fn zero_field_center_is_fair_coin() {
        let b = LatticeBox::cube(2, 3).unwrap();
        let hb = canonical_boundary(&b, &Slope::zero(2)).unwrap();
        let params = SampleParams { samples: 20000, burn_in: Some(20), thin: 1, seed: 4, random_scan: false };
        let draws = sample(&b, &hb, &ZeroField, &params).unwrap();
        let center = b.index_of(&[1, 1]);
        let p0 = draws.iter().filter(|h| h.values()[center] == 0).count() as f64
            / draws.len() as f64;
        assert!((p0 - 0.5).abs() < 0.02, "{p0}");
    }

    #[test]
    fn one_sweep_kernel_fixes_exact_distribution() {
        // 4x4 box: 4 interior sites.
        let b = LatticeBox::cube(2, 4).unwrap();
        let hb = canonical_boundary(&b, &Slope::zero(2)).unwrap();
        let f = Field::new(FieldSpec::iid_uniform(0.7, 21)).unwrap();
        let dist = exact_distribution(&b, &hb, &f, 100_000).unwrap();
        let (configs, kernel) = sweep_kernel(&b, &hb, &f, 100_000).unwrap();
        assert_eq!(configs.len(), dist.configs.len());
        // Rows are stochastic.
        for row in &kernel {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        // pi K = pi.
        let k = configs.len();
        for j in 0..k {
            let after: f64 = (0..k).map(|i| dist.probs[i] * kernel[i][j]).sum();
            assert!(
                (after - dist.probs[j]).abs() < 1e-10,
                "config {j}: {} vs {}",
                after,
                dist.probs[j]
            );
        }
    }

    #[test]
    fn empirical_distribution_approaches_exact() {
        let b = LatticeBox::cube(2, 4).unwrap();
        let hb = canonical_boundary(&b, &Slope::zero(2)).unwrap();
        let f = Field::new(FieldSpec::iid_uniform(0.5, 33)).unwrap();
        let dist = exact_distribution(&b, &hb, &f, 100_000).unwrap();
        let params = SampleParams { samples: 20000, burn_in: Some(400), thin: 2, seed: 5, random_scan: false };
        let draws = sample(&b, &hb, &f, &params).unwrap();
        let tv = empirical_tv_distance(&dist.configs, &dist.probs, &draws);
        assert!(tv < 0.05, "tv {tv}");
    }

    #[test]
    fn hp_ball_membership_basics() {
        let b = LatticeBox::cube(2, 10).unwrap();
        let hb = canonical_boundary(&b, &Slope::zero(2)).unwrap();
        let h = kirszbraun_extend(&b, &hb).unwrap();
        let ball = |delta: f64| HpBallSpec {
            profile: BoundaryProfile::Constant { value: 0.0 },
            delta,
            eps: 0.5,
        };
        // delta >= 2 always contains 1-Lipschitz-from-zero-boundary samples.
        assert!(hp_ball_contains(&h, &ball(2.0), 10).unwrap());
        // A profile shifted far away excludes the sample.
        let shifted = HpBallSpec {
            profile: BoundaryProfile::Constant { value: 5.0 },
            delta: 0.3,
            eps: 0.5,
        };
        assert!(!hp_ball_contains(&h, &shifted, 10).unwrap());
        // eps too large to hit any site (with a box away from the axes).
        let off = LatticeBox::new(vec![1, 1], vec![4, 4]).unwrap();
        let hb2 = canonical_boundary(&off, &Slope::zero(2)).unwrap();
        let h2 = kirszbraun_extend(&off, &hb2).unwrap();
        let wide = HpBallSpec {
            profile: BoundaryProfile::Constant { value: 0.0 },
            delta: 1.0,
            eps: 50.0,
        };
        assert!(hp_ball_contains(&h2, &wide, 10).is_err());
    }

    #[test]
    fn kirszbraun_extension_of_affine_boundary_is_in_tight_ball() {
        // The maximal extension is a cone over the boundary, so its distance
        // to the affine profile is controlled by (1 - |s|) times the depth;
        // near-frozen slopes keep it within 2 diam / n, checked numerically.
        let n = 12;
        let s = Slope::new(vec![0.9, 0.8]).unwrap();
        let b = LatticeBox::cube(2, n).unwrap();
        let hb = canonical_boundary(&b, &s).unwrap();
        let h = kirszbraun_extend(&b, &hb).unwrap();
        let profile = BoundaryProfile::Affine { slope: s.components().to_vec(), offset: 0.0 };
        let diam = 2.0 * (n - 1) as f64 / n as f64;
        let ball = HpBallSpec { profile: profile.clone(), delta: 2.0 * diam / n as f64, eps: 0.25 };
        assert!(hp_ball_contains(&h, &ball, n).unwrap());
        // Shifting the reference by twice the radius expels the sample.
        let shifted = HpBallSpec {
            profile: BoundaryProfile::Affine {
                slope: s.components().to_vec(),
                offset: 2.0 * ball.delta + 0.2,
            },
            delta: ball.delta,
            eps: 0.25,
        };
        assert!(!hp_ball_contains(&h, &shifted, n).unwrap());
    }

    #[test]
    fn frozen_slope_concentrates_trivially() {
        let s = Slope::new(vec![1.0, 1.0]).unwrap();
        let params = SampleParams { samples: 50, burn_in: Some(10), thin: 1, seed: 2, random_scan: false };
        let r = concentration_experiment(&s, 6, &ZeroField, 2.0, 0.5, &params).unwrap();
        assert_eq!(r.fraction, 1.0);
    }
}
