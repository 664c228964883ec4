//! Quenched, annealed, and free-boundary local surface tensions, their
//! convergence diagnostics, the fixed/free sandwich, and tabulation with
//! convexification for the variational solver.
//!
//! Sign convention, used project-wide: ent = -(1/|S_n|) ln Z. With the zero
//! field this is -(1/n^m) ln |M|.

use serde::{Deserialize, Serialize};

use crate::boundary::{canonical_boundary, Slope};
use crate::error::{Error, Result};
use crate::field::{EdgeField, Field, FieldSpec};
use crate::gibbs::{free_log_partition, log_partition};
use crate::lattice::LatticeBox;
use crate::util::{mean_stderr, parallel_map, sample_std, task_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TensionKind {
    Fixed,
    Free { delta: f64 },
    Annealed { stderr: f64, samples: usize },
}

/// One measured surface-tension value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensionSample {
    pub s: Vec<f64>,
    pub n: i64,
    pub value: f64,
    #[serde(flatten)]
    pub kind: TensionKind,
    /// Field fingerprint (fixed/free) or master seed (annealed).
    pub fingerprint: u64,
}

/// Microscopic quenched local surface tension with the canonical fixed
/// boundary of slope s on S_n: -(1/n^m) ln Z.
pub fn ent_fixed<F: EdgeField + ?Sized>(s: &Slope, n: i64, field: &F) -> Result<f64> {
    let bbox = LatticeBox::cube(s.dim(), n)?;
    let hb = canonical_boundary(&bbox, s)?;
    let lz = log_partition(&bbox, &hb, field)?;
    Ok(-lz.value / bbox.site_count() as f64)
}

/// Quenched microscopic entropy with free(delta) boundary data.
pub fn ent_free<F: EdgeField + ?Sized>(s: &Slope, n: i64, delta: f64, field: &F) -> Result<f64> {
    let bbox = LatticeBox::cube(s.dim(), n)?;
    let lz = free_log_partition(&bbox, s, delta, field)?;
    Ok(-lz.value / bbox.site_count() as f64)
}

/// Monte Carlo estimate of the annealed tension E[ent_n(s, .)]. Per-sample
/// field seeds are `task_seed(spec.seed, i)`, so the estimate is independent
/// of scheduling and shared with the time-constant estimator.
pub fn ent_annealed(s: &Slope, n: i64, spec: &FieldSpec, samples: usize) -> Result<(f64, f64)> {
    if samples < 2 {
        return Err(Error::validation("samples", "samples >= 2 required"));
    }
    spec.validate()?;
    let values = annealed_samples(s, n, spec, samples)?;
    Ok(mean_stderr(&values))
}

pub(crate) fn annealed_samples(
    s: &Slope,
    n: i64,
    spec: &FieldSpec,
    samples: usize,
) -> Result<Vec<f64>> {
    let results = parallel_map(samples, |i| {
        let f =
            Field::new(spec.reseeded(task_seed(spec.seed, i as u64))).expect("validated spec");
        ent_fixed(s, n, &f)
    });
    results.into_iter().collect()
}

/// ent_fixed along an increasing n list for one fixed realization.
pub fn convergence_study(s: &Slope, field: &Field, ns: &[i64]) -> Result<Vec<TensionSample>> {
    require_increasing(ns)?;
    ns.iter()
        .map(|&n| {
            Ok(TensionSample {
                s: s.components().to_vec(),
                n,
                value: ent_fixed(s, n, field)?,
                kind: TensionKind::Fixed,
                fingerprint: field.fingerprint(),
            })
        })
        .collect()
}

/// Homogenization diagnostic: cross-realization mean and standard deviation
/// of ent_fixed per n.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HomogenizationPoint {
    pub n: i64,
    pub mean: f64,
    pub std: f64,
    pub samples: usize,
}

pub fn homogenization_study(
    s: &Slope,
    spec: &FieldSpec,
    ns: &[i64],
    samples: usize,
) -> Result<Vec<HomogenizationPoint>> {
    require_increasing(ns)?;
    if samples < 2 {
        return Err(Error::validation("samples", "samples >= 2 required"));
    }
    spec.validate()?;
    ns.iter()
        .map(|&n| {
            let values = annealed_samples(s, n, spec, samples)?;
            let (mean, _) = mean_stderr(&values);
            Ok(HomogenizationPoint { n, mean, std: sample_std(&values), samples })
        })
        .collect()
}

fn require_increasing(ns: &[i64]) -> Result<()> {
    if ns.is_empty() || ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::validation("n_list", "strictly increasing n list required"));
    }
    Ok(())
}

/// Finite-volume verification of the fixed/free sandwich.
///
/// With C = 2/(1 - |s|_inf) and n' = n + ceil(C delta n), checks
///
///   ent_n >= ent_free(delta)_n
///   ent_free(delta)_n >= (|S_n'|/|S_n|) ent_n' - C_omega (|E(S_n')| - |E(S_n)|) / n^m
///
/// The first is a set inclusion. The second is the finite-n form of the
/// asymptotic comparison: rescaling ln Z_{n'} by 1/|S_n| produces the exact
/// box-size ratio |S_n'|/|S_n|, and the error term counts every neighbor pair
/// present in S_n' but not in S_n at the uniform field bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SandwichReport {
    pub s: Vec<f64>,
    pub n: i64,
    pub n_prime: i64,
    pub delta: f64,
    pub c_constant: f64,
    pub ent_fixed_n: f64,
    pub ent_free_n: f64,
    pub ent_fixed_n_prime: f64,
    pub volume_ratio: f64,
    pub edge_count_diff: u64,
    pub error_term: f64,
    pub slack_first: f64,
    pub slack_second: f64,
    pub pass: bool,
}

pub fn sandwich_check<F: EdgeField + ?Sized>(
    s: &Slope,
    n: i64,
    delta: f64,
    field: &F,
) -> Result<SandwichReport> {
    s.require_strict("s")?;
    if delta.is_nan() || delta <= 0.0 || delta.is_infinite() {
        return Err(Error::validation("delta", "delta > 0 required"));
    }
    let m = s.dim();
    let c_constant = 2.0 / (1.0 - s.linf());
    let n_prime = n + (c_constant * delta * n as f64).ceil() as i64;
    let box_n = LatticeBox::cube(m, n)?;
    let box_np = LatticeBox::cube(m, n_prime)?;

    let ent_fixed_n = ent_fixed(s, n, field)?;
    let ent_free_n = ent_free(s, n, delta, field)?;
    let ent_fixed_n_prime = ent_fixed(s, n_prime, field)?;

    let volume_ratio = box_np.site_count() as f64 / box_n.site_count() as f64;
    let edge_count_diff = box_np.edge_count() - box_n.edge_count();
    let error_term = field.bound() * edge_count_diff as f64 / box_n.site_count() as f64;

    let slack_first = ent_fixed_n - ent_free_n;
    let slack_second = ent_free_n - (volume_ratio * ent_fixed_n_prime - error_term);
    Ok(SandwichReport {
        s: s.components().to_vec(),
        n,
        n_prime,
        delta,
        c_constant,
        ent_fixed_n,
        ent_free_n,
        ent_fixed_n_prime,
        volume_ratio,
        edge_count_diff,
        error_term,
        slack_first,
        slack_second,
        pass: slack_first >= 0.0 && slack_second >= 0.0,
    })
}

// ---------------------------------------------------------------------------
// Tabulation
// ---------------------------------------------------------------------------

/// A regular product grid over the slope cube, the same axis per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeGrid {
    pub m: usize,
    pub axis: Vec<f64>,
}

impl SlopeGrid {
    /// Symmetric axis covering [-(1-margin), 1-margin].
    pub fn symmetric(m: usize, points_per_axis: usize, margin: f64) -> Result<Self> {
        if points_per_axis < 2 {
            return Err(Error::validation("grid", "at least 2 points per axis"));
        }
        if !(margin > 0.0 && margin < 1.0) {
            return Err(Error::validation("margin", "0 < margin < 1 required"));
        }
        let hi = 1.0 - margin;
        let k = points_per_axis - 1;
        let axis = (0..=k).map(|i| -hi + 2.0 * hi * i as f64 / k as f64).collect();
        Ok(SlopeGrid { m, axis })
    }

    pub fn len(&self) -> usize {
        self.axis.len().pow(self.m as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.axis.is_empty()
    }

    /// Grid point by raster index, axis 0 fastest.
    pub fn point(&self, mut idx: usize) -> Vec<f64> {
        let k = self.axis.len();
        (0..self.m)
            .map(|_| {
                let v = self.axis[idx % k];
                idx /= k;
                v
            })
            .collect()
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableMeta {
    pub spec: Option<FieldSpec>,
    pub n: i64,
    pub samples: usize,
}

/// Slope-grid samples of the surface tension plus their lower convex
/// envelope. The solver only ever reads the convexified values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurfaceTensionTable {
    pub grid: SlopeGrid,
    pub raw: Vec<f64>,
    pub convexified: Vec<f64>,
    pub is_convexified: bool,
    pub meta: TableMeta,
}

impl SurfaceTensionTable {
    /// Builds a table from a function known to be convex (synthetic tables
    /// for solver tests); the envelope step is skipped because it would be
    /// the identity.
    pub fn synthetic_convex(grid: SlopeGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        let raw: Vec<f64> = grid.points().map(|p| f(&p)).collect();
        SurfaceTensionTable {
            convexified: raw.clone(),
            raw,
            is_convexified: true,
            grid,
            meta: TableMeta { spec: None, n: 0, samples: 0 },
        }
    }

    pub fn domain_lo(&self) -> f64 {
        self.grid.axis[0]
    }

    pub fn domain_hi(&self) -> f64 {
        *self.grid.axis.last().unwrap()
    }

    /// Clamps a slope into the table domain, returning the clamped point and
    /// the squared l2 distance moved.
    pub fn clamp(&self, s: &[f64]) -> (Vec<f64>, f64) {
        let (lo, hi) = (self.domain_lo(), self.domain_hi());
        let clamped: Vec<f64> = s.iter().map(|v| v.clamp(lo, hi)).collect();
        let dist2 = s.iter().zip(&clamped).map(|(a, b)| (a - b) * (a - b)).sum();
        (clamped, dist2)
    }

    fn cell_of(&self, v: f64) -> (usize, f64) {
        // Largest i with axis[i] <= v, capped to the second-to-last knot.
        let axis = &self.grid.axis;
        let k = axis.len();
        let mut i = match axis.binary_search_by(|a| a.partial_cmp(&v).unwrap()) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        i = i.min(k - 2);
        let t = (v - axis[i]) / (axis[i + 1] - axis[i]);
        (i, t.clamp(0.0, 1.0))
    }

    /// Multilinear interpolation of the convexified values; the slope must be
    /// inside the domain (callers clamp first).
    pub fn value(&self, s: &[f64]) -> f64 {
        assert_eq!(s.len(), self.grid.m);
        let k = self.grid.axis.len();
        let cells: Vec<(usize, f64)> = s.iter().map(|&v| self.cell_of(v)).collect();
        let mut acc = 0.0;
        for corner in 0..(1usize << self.grid.m) {
            let mut w = 1.0;
            let mut idx = 0usize;
            let mut stride = 1usize;
            for (d, &(i, t)) in cells.iter().enumerate() {
                let up = corner >> d & 1 == 1;
                w *= if up { t } else { 1.0 - t };
                idx += (i + up as usize) * stride;
                stride *= k;
            }
            acc += w * self.convexified[idx];
        }
        acc
    }

    /// Gradient of the active interpolation simplex (cells split along the
    /// main diagonal), used as the subgradient of the piecewise-linear
    /// surface. For m = 1 this is the cell slope.
    pub fn simplex_gradient(&self, s: &[f64]) -> Vec<f64> {
        assert_eq!(s.len(), self.grid.m);
        let k = self.grid.axis.len();
        let cells: Vec<(usize, f64)> = s.iter().map(|&v| self.cell_of(v)).collect();
        match self.grid.m {
            1 => {
                let (i, _) = cells[0];
                let h = self.grid.axis[i + 1] - self.grid.axis[i];
                vec![(self.convexified[i + 1] - self.convexified[i]) / h]
            }
            2 => {
                let (i, tx) = cells[0];
                let (j, ty) = cells[1];
                let hx = self.grid.axis[i + 1] - self.grid.axis[i];
                let hy = self.grid.axis[j + 1] - self.grid.axis[j];
                let at = |a: usize, b: usize| self.convexified[a + b * k];
                // Lower-left triangle when tx + ty <= 1, upper-right otherwise.
                if tx + ty <= 1.0 {
                    vec![(at(i + 1, j) - at(i, j)) / hx, (at(i, j + 1) - at(i, j)) / hy]
                } else {
                    vec![
                        (at(i + 1, j + 1) - at(i, j + 1)) / hx,
                        (at(i + 1, j + 1) - at(i + 1, j)) / hy,
                    ]
                }
            }
            m => panic!("simplex gradient only implemented for m <= 2, got {m}"),
        }
    }
}

/// Lower convex envelope of 1D samples via the monotone chain, evaluated back
/// on the sample grid.
fn convexify_1d(xs: &[f64], vs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut hull: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (xs[b] - xs[a]) * (vs[i] - vs[a]) - (xs[i] - xs[a]) * (vs[b] - vs[a]);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    let mut out = vec![0.0; n];
    let mut seg = 0usize;
    for i in 0..n {
        while seg + 1 < hull.len() && xs[hull[seg + 1]] < xs[i] {
            seg += 1;
        }
        let a = hull[seg];
        let b = hull[(seg + 1).min(hull.len() - 1)];
        if a == b || xs[i] <= xs[a] {
            out[i] = vs[a];
        } else {
            let t = (xs[i] - xs[a]) / (xs[b] - xs[a]);
            out[i] = vs[a] + t * (vs[b] - vs[a]);
        }
    }
    out
}

/// Lower convex envelope of 2D grid samples, exact by Caratheodory: the
/// envelope at a grid point is the minimum over all convex combinations of at
/// most three sample points containing it. Cubic in the number of grid
/// points; intended for the modest grids the tabulation pipeline produces.
fn convexify_2d(grid: &SlopeGrid, vs: &[f64]) -> Vec<f64> {
    let k = grid.axis.len();
    let g = grid.len();
    let pts: Vec<(f64, f64)> = (0..g)
        .map(|i| {
            let p = grid.point(i);
            (p[0], p[1])
        })
        .collect();
    let mut env = vs.to_vec();
    let axis = &grid.axis;
    let step = axis[1] - axis[0];
    let idx_range = |lo: f64, hi: f64| -> (usize, usize) {
        let a = ((lo - axis[0]) / step).floor().max(0.0) as usize;
        let b = (((hi - axis[0]) / step).ceil() as usize).min(k - 1);
        (a.min(k - 1), b)
    };
    // Segments: grid points on the chord get the interpolated value.
    for i in 0..g {
        for j in i + 1..g {
            let (x1, y1) = pts[i];
            let (x2, y2) = pts[j];
            let (ax, bx) = idx_range(x1.min(x2), x1.max(x2));
            let (ay, by) = idx_range(y1.min(y2), y1.max(y2));
            let denom = (x2 - x1) * (x2 - x1) + (y2 - y1) * (y2 - y1);
            for gy in ay..=by {
                for gx in ax..=bx {
                    let p = gx + gy * k;
                    let (px, py) = pts[p];
                    let cross = (x2 - x1) * (py - y1) - (px - x1) * (y2 - y1);
                    if cross.abs() > 1e-9 * step {
                        continue;
                    }
                    let t = ((px - x1) * (x2 - x1) + (py - y1) * (y2 - y1)) / denom;
                    if (-1e-12..=1.0 + 1e-12).contains(&t) {
                        let val = vs[i] + t * (vs[j] - vs[i]);
                        if val < env[p] {
                            env[p] = val;
                        }
                    }
                }
            }
        }
    }
    // Triangles: barycentric interpolation for contained grid points.
    for i in 0..g {
        let (x1, y1) = pts[i];
        for j in i + 1..g {
            let (x2, y2) = pts[j];
            for l in j + 1..g {
                let (x3, y3) = pts[l];
                let det = (x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1);
                if det.abs() < 1e-12 {
                    continue;
                }
                let (ax, bx) = idx_range(x1.min(x2).min(x3), x1.max(x2).max(x3));
                let (ay, by) = idx_range(y1.min(y2).min(y3), y1.max(y2).max(y3));
                for gy in ay..=by {
                    for gx in ax..=bx {
                        let p = gx + gy * k;
                        let (px, py) = pts[p];
                        let l2 = ((px - x1) * (y3 - y1) - (x3 - x1) * (py - y1)) / det;
                        let l3 = ((x2 - x1) * (py - y1) - (px - x1) * (y2 - y1)) / det;
                        let l1 = 1.0 - l2 - l3;
                        if l1 >= -1e-12 && l2 >= -1e-12 && l3 >= -1e-12 {
                            let val = l1 * vs[i] + l2 * vs[j] + l3 * vs[l];
                            if val < env[p] {
                                env[p] = val;
                            }
                        }
                    }
                }
            }
        }
    }
    env
}

/// Replaces raw values by their lower convex envelope.
pub fn convexify(grid: &SlopeGrid, raw: &[f64]) -> Result<Vec<f64>> {
    match grid.m {
        1 => Ok(convexify_1d(&grid.axis, raw)),
        2 => Ok(convexify_2d(grid, raw)),
        m => Err(Error::validation(
            "grid",
            format!("convexification supports m in {{1,2}}, got {m}"),
        )),
    }
}

/// Annealed tension on every grid slope, then the lower convex envelope.
pub fn tabulate_tension(
    spec: &FieldSpec,
    n: i64,
    samples: usize,
    grid: SlopeGrid,
) -> Result<SurfaceTensionTable> {
    spec.validate()?;
    if grid.m < 1 || grid.m > 2 {
        return Err(Error::validation("grid", "tabulation supports m in {1,2}"));
    }
    if grid.axis.iter().any(|v| v.abs() > 1.0) {
        return Err(Error::validation("grid", "grid slopes must satisfy |s|_inf <= 1"));
    }
    let points: Vec<Vec<f64>> = grid.points().collect();
    let results = parallel_map(points.len(), |i| {
        let s = Slope::new(points[i].clone())?;
        // Decorrelate grid points: each gets its own master stream.
        let spec_i = spec.reseeded(task_seed(spec.seed, 0x7ab1e ^ i as u64));
        ent_annealed(&s, n, &spec_i, samples).map(|(mean, _)| mean)
    });
    let raw: Vec<f64> = results.into_iter().collect::<Result<_>>()?;
    let convexified = convexify(&grid, &raw)?;
    Ok(SurfaceTensionTable {
        grid,
        raw,
        convexified,
        is_convexified: true,
        meta: TableMeta { spec: Some(spec.clone()), n, samples },
    })
}
