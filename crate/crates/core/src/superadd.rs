//! The almost-superadditive process F_B = ln Z_B with canonical sloped
//! boundaries: finite-volume defect checks, the covering lemma, the time
//! constant, and an empirical probe of the maximal inequality.

use serde::{Deserialize, Serialize};

use crate::boundary::{canonical_boundary, Slope};
use crate::error::{Error, Result};
use crate::field::{EdgeField, Field, FieldSpec};
use crate::gibbs::log_partition;
use crate::lattice::{LatticeBox, Site};
use crate::tension::{annealed_samples, ent_fixed};
use crate::util::{mean_stderr, mix64, parallel_map, SeqRng};

/// F_B = ln Z_{B, h^s_dB, omega}: the log partition function with the
/// canonical boundary of slope s on the box.
pub fn process_f<F: EdgeField + ?Sized>(bbox: &LatticeBox, field: &F, s: &Slope) -> Result<f64> {
    let hb = canonical_boundary(bbox, s)?;
    Ok(log_partition(bbox, &hb, field)?.value)
}

/// Both sides of the translation identity F_{u+B}(w) = F_B(tau_u w).
///
/// The identity is exact whenever u.s is an integer congruent to |u|_1
/// mod 2 (then the canonical boundaries of B and u+B are translates of each
/// other); for other u the two canonical boundaries differ by rounding and
/// the identity only holds asymptotically.
pub fn translation_pair(
    bbox: &LatticeBox,
    u: &[i64],
    field: &Field,
    s: &Slope,
) -> Result<(f64, f64)> {
    let translated = bbox.translate(u)?;
    let lhs = process_f(&translated, field, s)?;
    let rhs = process_f(bbox, &field.slope_shifted(u, s), s)?;
    Ok((lhs, rhs))
}

/// A partition of a box into disjoint sub-boxes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxPartition {
    pub parent: LatticeBox,
    pub parts: Vec<LatticeBox>,
}

impl BoxPartition {
    pub fn new(parent: LatticeBox, parts: Vec<LatticeBox>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::validation("parts", "at least one part required"));
        }
        let m = parent.dim();
        let mut total = 0usize;
        for (i, p) in parts.iter().enumerate() {
            if p.dim() != m {
                return Err(Error::validation("parts", "dimension mismatch"));
            }
            let inside =
                (0..m).all(|a| parent.lo()[a] <= p.lo()[a] && p.hi()[a] <= parent.hi()[a]);
            if !inside {
                return Err(Error::validation("parts", format!("part {i} not inside parent")));
            }
            for q in &parts[i + 1..] {
                let overlap =
                    (0..m).all(|a| p.lo()[a] < q.hi()[a] && q.lo()[a] < p.hi()[a]);
                if overlap {
                    return Err(Error::validation("parts", "parts overlap"));
                }
            }
            total += p.site_count();
        }
        if total != parent.site_count() {
            return Err(Error::validation("parts", "parts do not cover the parent"));
        }
        Ok(BoxPartition { parent, parts })
    }
}

/// Result of one superadditivity check. `defect >= 0` is the finite-volume
/// content of the estimate: gluing part configurations injects into the
/// parent set and each crossing edge costs at most the field bound, with at
/// most m |dB_i| crossing edges charged to part i.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DefectReport {
    pub defect: f64,
    pub f_parent: f64,
    pub f_parts: Vec<f64>,
    pub a_value: f64,
    pub boundary_sum: u64,
    pub strict: bool,
    pub instance_hash: u64,
    pub pass: bool,
}

/// Computes F_B - sum_i F_{B_i} + A sum_i |dB_i| with A = m * C where C is
/// the analytic field bound, or, in strict mode, the realized sup of |w_e|
/// over the height-edge window the crossing edges can touch.
pub fn superadditivity_defect<F: EdgeField + ?Sized>(
    partition: &BoxPartition,
    field: &F,
    s: &Slope,
    strict: bool,
) -> Result<DefectReport> {
    let m = partition.parent.dim();
    if s.dim() != m {
        return Err(Error::validation("s", "slope dimension must match partition"));
    }
    let f_parent = process_f(&partition.parent, field, s)?;
    let mut f_parts = Vec::with_capacity(partition.parts.len());
    let mut boundary_sum = 0u64;
    let mut val_lo = i64::MAX;
    let mut val_hi = i64::MIN;
    for part in &partition.parts {
        f_parts.push(process_f(part, field, s)?);
        boundary_sum += part.inner_boundary().len() as u64;
        for (_, v) in canonical_boundary(part, s)?.iter() {
            val_lo = val_lo.min(v);
            val_hi = val_hi.max(v);
        }
    }
    let bound = if strict {
        // Crossing edges run between canonical boundary heights of the
        // parts, so their height-edge indices stay in [val_lo, val_hi - 1].
        let mut sup = 0.0f64;
        for k in val_lo..val_hi.max(val_lo) {
            sup = sup.max(field.weight(k).abs());
        }
        sup
    } else {
        field.bound()
    };
    let a_value = m as f64 * bound;
    let defect = f_parent - f_parts.iter().sum::<f64>() + a_value * boundary_sum as f64;

    let mut hash = field.fingerprint();
    for b in std::iter::once(&partition.parent).chain(&partition.parts) {
        for v in b.lo().iter().chain(b.hi()) {
            hash = mix64(hash ^ *v as u64);
        }
    }
    for c in s.components() {
        hash = mix64(hash ^ c.to_bits());
    }
    Ok(DefectReport {
        defect,
        f_parent,
        f_parts,
        a_value,
        boundary_sum,
        strict,
        instance_hash: hash,
        pass: defect >= 0.0,
    })
}

/// Deterministic random partition: a random parent box split by recursive
/// axis cuts. Parent extents stay within `max_extent` per axis, so exact DP
/// remains feasible.
pub fn random_partition(m: usize, max_extent: i64, seed: u64) -> Result<BoxPartition> {
    let mut rng = SeqRng::new(seed);
    let lo: Vec<i64> = (0..m).map(|_| rng.below(9) as i64 - 4).collect();
    let hi: Vec<i64> = lo
        .iter()
        .map(|l| l + 2 + rng.below(max_extent.max(2) as u64 - 1) as i64)
        .collect();
    let parent = LatticeBox::new(lo, hi)?;
    let mut parts = Vec::new();
    fn split(b: LatticeBox, depth: u32, rng: &mut SeqRng, out: &mut Vec<LatticeBox>) {
        let splittable: Vec<usize> = (0..b.dim()).filter(|&a| b.extent(a) >= 2).collect();
        if depth == 0 || splittable.is_empty() || rng.below(4) == 0 {
            out.push(b);
            return;
        }
        let axis = splittable[rng.below(splittable.len() as u64) as usize];
        let cut = b.lo()[axis] + 1 + rng.below(b.extent(axis) as u64 - 1) as i64;
        let mut hi_left = b.hi().to_vec();
        hi_left[axis] = cut;
        let mut lo_right = b.lo().to_vec();
        lo_right[axis] = cut;
        split(LatticeBox::new(b.lo().to_vec(), hi_left).unwrap(), depth - 1, rng, out);
        split(LatticeBox::new(lo_right, b.hi().to_vec()).unwrap(), depth - 1, rng, out);
    }
    split(parent.clone(), 3, &mut rng, &mut parts);
    BoxPartition::new(parent, parts)
}

// ---------------------------------------------------------------------------
// Covering lemma
// ---------------------------------------------------------------------------

/// A covering instance: finite site set W with a box size n(u) >= 1 per site.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverInstance {
    pub sites: Vec<Site>,
    pub sizes: Vec<i64>,
}

impl CoverInstance {
    pub fn new(sites: Vec<Site>, sizes: Vec<i64>) -> Result<Self> {
        if sites.is_empty() || sites.len() != sizes.len() {
            return Err(Error::validation("cover", "one size per site, at least one site"));
        }
        if sizes.iter().any(|&n| n < 1) {
            return Err(Error::validation("cover", "n(u) >= 1 required"));
        }
        let mut sorted = sites.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != sites.len() {
            return Err(Error::validation("cover", "duplicate sites in W"));
        }
        Ok(CoverInstance { sites, sizes })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverResult {
    /// Indices into the instance, in selection order.
    pub selected: Vec<usize>,
    pub selected_volume: u64,
    /// 3^m times the selected volume; at least |W| by the covering lemma.
    pub bound_lhs: u64,
    pub w_size: usize,
    pub disjoint: bool,
    pub bound_ok: bool,
}

/// Greedy Wiener covering: process candidates by decreasing n(u) (ties by
/// lexicographic site order) and select those whose box u + S_{n(u)} is
/// disjoint from everything selected so far. The tripled concentric boxes of
/// the selection cover W, which yields the 3^m volume bound.
pub fn wiener_cover(inst: &CoverInstance, m: usize) -> Result<CoverResult> {
    if inst.sites.iter().any(|u| u.len() != m) {
        return Err(Error::validation("cover", "site dimension mismatch"));
    }
    let mut order: Vec<usize> = (0..inst.sites.len()).collect();
    order.sort_by(|&a, &b| {
        inst.sizes[b].cmp(&inst.sizes[a]).then_with(|| inst.sites[a].cmp(&inst.sites[b]))
    });
    let boxes: Vec<(Vec<i64>, Vec<i64>)> = inst
        .sites
        .iter()
        .zip(&inst.sizes)
        .map(|(u, &n)| {
            let lo = u.clone();
            let hi: Vec<i64> = u.iter().map(|c| c + n).collect();
            (lo, hi)
        })
        .collect();
    let disjoint_from = |i: usize, sel: &[usize]| {
        sel.iter().all(|&j| {
            (0..m).any(|a| boxes[i].1[a] <= boxes[j].0[a] || boxes[j].1[a] <= boxes[i].0[a])
        })
    };
    let mut selected = Vec::new();
    for i in order {
        if disjoint_from(i, &selected) {
            selected.push(i);
        }
    }
    let selected_volume: u64 =
        selected.iter().map(|&i| (inst.sizes[i] as u64).pow(m as u32)).sum();
    let bound_lhs = 3u64.pow(m as u32) * selected_volume;
    let w_size = inst.sites.len();
    // Verify rather than assume disjointness.
    let mut disjoint = true;
    for (a, &i) in selected.iter().enumerate() {
        for &j in &selected[a + 1..] {
            let overlap = (0..m)
                .all(|ax| boxes[i].0[ax] < boxes[j].1[ax] && boxes[j].0[ax] < boxes[i].1[ax]);
            if overlap {
                disjoint = false;
            }
        }
    }
    Ok(CoverResult {
        selected,
        selected_volume,
        bound_lhs,
        w_size,
        disjoint,
        bound_ok: bound_lhs >= w_size as u64,
    })
}

// ---------------------------------------------------------------------------
// Time constant and maximal inequality
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaPoint {
    pub n: i64,
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// Monte Carlo estimates of (1/|S_n|) E[F_{S_n}] along an n list. Shares
/// seeds and computation with the annealed tension, so the series equals
/// -ent_annealed exactly.
pub fn empirical_gamma(
    spec: &FieldSpec,
    s: &Slope,
    ns: &[i64],
    samples: usize,
) -> Result<Vec<GammaPoint>> {
    if ns.is_empty() || ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::validation("n_list", "strictly increasing n list required"));
    }
    if samples < 2 {
        return Err(Error::validation("samples", "samples >= 2 required"));
    }
    spec.validate()?;
    ns.iter()
        .map(|&n| {
            let ents = annealed_samples(s, n, spec, samples)?;
            let negated: Vec<f64> = ents.iter().map(|v| -v).collect();
            let (mean, stderr) = mean_stderr(&negated);
            Ok(GammaPoint { n, mean, stderr, samples })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaximalProbeReport {
    pub alpha: f64,
    pub n_max: i64,
    pub trials: usize,
    pub empirical_prob: f64,
    pub binomial_stderr: f64,
    /// Estimate of the time constant of the shifted non-negative process.
    pub gamma_tilde: f64,
    /// 3^m gamma / alpha.
    pub bound: f64,
    pub pass: bool,
}

/// Empirical check of the maximal inequality for the non-negative process
/// F'_{S_n} = F_{S_n} + A |S_n| (A = m C), obtained by subtracting the
/// additive comparison process. Estimates P(sup_{n <= n_max} F'/|S_n| >
/// alpha) over independent realizations and compares it against
/// 3^m gamma(F') / alpha.
pub fn maximal_inequality_probe(
    spec: &FieldSpec,
    s: &Slope,
    alpha: f64,
    n_max: i64,
    trials: usize,
) -> Result<MaximalProbeReport> {
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(Error::validation("alpha", "alpha > 0 required"));
    }
    if n_max < 1 {
        return Err(Error::validation("n_max", "n_max >= 1 required"));
    }
    if trials < 1 {
        return Err(Error::validation("trials", "trials >= 1 required"));
    }
    spec.validate()?;
    let m = s.dim();
    let shift = m as f64 * spec.c_omega();
    let ns: Vec<i64> = (1..=n_max).collect();
    // Per trial: the whole path n -> F'/|S_n| for one realization.
    let rows: Result<Vec<(bool, f64)>> = parallel_map(trials, |t| {
        let f = Field::new(spec.reseeded(crate::util::task_seed(spec.seed, t as u64)))
            .expect("validated spec");
        let mut sup = f64::NEG_INFINITY;
        let mut last = 0.0;
        for &n in &ns {
            let v = -ent_fixed(s, n, &f)? + shift;
            sup = sup.max(v);
            last = v;
        }
        Ok((sup > alpha, last))
    })
    .into_iter()
    .collect();
    let rows = rows?;
    let exceed = rows.iter().filter(|(e, _)| *e).count();
    let empirical_prob = exceed as f64 / trials as f64;
    let binomial_stderr = (empirical_prob * (1.0 - empirical_prob) / trials as f64).sqrt();
    let gamma_tilde = rows.iter().map(|(_, v)| v).sum::<f64>() / trials as f64;
    let bound = 3f64.powi(m as i32) * gamma_tilde / alpha;
    Ok(MaximalProbeReport {
        alpha,
        n_max,
        trials,
        empirical_prob,
        binomial_stderr,
        gamma_tilde,
        bound,
        pass: empirical_prob <= bound + 3.0 * binomial_stderr,
    })
}
