//! Axis-aligned integer boxes, their inner boundaries, and height functions.
//!
//! A height function takes a value in Z at every site of a box and changes by
//! exactly 1 across every lattice edge. Boxes are lattice-convex, so the
//! in-box graph distance between two sites equals their l1 distance; all
//! Lipschitz reasoning below relies on that.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Site = Vec<i64>;

/// l1 distance between two sites of equal dimension.
pub fn l1_dist(a: &[i64], b: &[i64]) -> i64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Parity of a site: |x|_1 mod 2. Heights of the canonical class satisfy
/// h(x) = parity(x) (mod 2).
pub fn site_parity(x: &[i64]) -> i64 {
    x.iter().sum::<i64>().rem_euclid(2)
}

/// A non-empty box `prod_i [lo_i, hi_i)` in Z^m. `hi` is exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeBox {
    lo: Vec<i64>,
    hi: Vec<i64>,
}

impl LatticeBox {
    pub fn new(lo: Vec<i64>, hi: Vec<i64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::validation(
                "box",
                "lo and hi must be non-empty vectors of equal length",
            ));
        }
        for i in 0..lo.len() {
            if lo[i] >= hi[i] {
                return Err(Error::validation(
                    "box",
                    format!("lo[{i}] < hi[{i}] required, got [{}, {})", lo[i], hi[i]),
                ));
            }
        }
        // Keep site counts comfortably inside usize.
        let mut count: u128 = 1;
        for i in 0..lo.len() {
            count = count.saturating_mul((hi[i] - lo[i]) as u128);
        }
        if count > (1 << 40) {
            return Err(Error::infeasible(format!("box has {count} sites")));
        }
        Ok(LatticeBox { lo, hi })
    }

    /// The hypercube S_n = {0, ..., n-1}^m.
    pub fn cube(m: usize, n: i64) -> Result<Self> {
        if n < 1 {
            return Err(Error::validation("n", "n >= 1 required"));
        }
        LatticeBox::new(vec![0; m], vec![n; m])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[i64] {
        &self.lo
    }

    pub fn hi(&self) -> &[i64] {
        &self.hi
    }

    pub fn extent(&self, axis: usize) -> i64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn site_count(&self) -> usize {
        (0..self.dim()).map(|i| self.extent(i) as usize).product()
    }

    /// Number of unordered nearest-neighbor pairs inside the box.
    pub fn edge_count(&self) -> u64 {
        let m = self.dim();
        let total: usize = self.site_count();
        (0..m)
            .map(|i| {
                let e = self.extent(i) as u64;
                (total as u64 / e) * (e - 1)
            })
            .sum()
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        x.len() == self.dim() && (0..self.dim()).all(|i| self.lo[i] <= x[i] && x[i] < self.hi[i])
    }

    /// Translate by `u`.
    pub fn translate(&self, u: &[i64]) -> Result<Self> {
        if u.len() != self.dim() {
            return Err(Error::validation("u", "dimension mismatch"));
        }
        LatticeBox::new(
            self.lo.iter().zip(u).map(|(a, b)| a + b).collect(),
            self.hi.iter().zip(u).map(|(a, b)| a + b).collect(),
        )
    }

    /// Raster index of a site: axis 0 varies fastest.
    pub fn index_of(&self, x: &[i64]) -> usize {
        debug_assert!(self.contains(x));
        let mut idx = 0usize;
        let mut stride = 1usize;
        for i in 0..self.dim() {
            idx += (x[i] - self.lo[i]) as usize * stride;
            stride *= self.extent(i) as usize;
        }
        idx
    }

    pub fn site_at(&self, mut idx: usize) -> Site {
        let mut x = vec![0i64; self.dim()];
        for i in 0..self.dim() {
            let e = self.extent(i) as usize;
            x[i] = self.lo[i] + (idx % e) as i64;
            idx /= e;
        }
        x
    }

    /// All sites in raster order.
    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.site_count()).map(move |i| self.site_at(i))
    }

    /// True iff the site has a lattice neighbor outside the box.
    pub fn is_inner_boundary(&self, x: &[i64]) -> bool {
        (0..self.dim()).any(|i| x[i] == self.lo[i] || x[i] == self.hi[i] - 1)
    }

    /// The inner boundary in raster order.
    pub fn inner_boundary(&self) -> Vec<Site> {
        self.sites().filter(|x| self.is_inner_boundary(x)).collect()
    }

    /// In-box neighbors of a site.
    pub fn neighbors<'a>(&'a self, x: &'a [i64]) -> impl Iterator<Item = Site> + 'a {
        (0..self.dim()).flat_map(move |i| {
            [-1i64, 1].into_iter().filter_map(move |d| {
                let mut y = x.to_vec();
                y[i] += d;
                if self.contains(&y) {
                    Some(y)
                } else {
                    None
                }
            })
        })
    }
}

/// A height function on a box, stored by raster index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeightFunction {
    bbox: LatticeBox,
    values: Vec<i64>,
}

impl HeightFunction {
    /// Builds and checks the +-1 neighbor constraint. The parity invariant
    /// follows from it because boxes are connected.
    pub fn new(bbox: LatticeBox, values: Vec<i64>) -> Result<Self> {
        if values.len() != bbox.site_count() {
            return Err(Error::validation("values", "one value per site required"));
        }
        let hf = HeightFunction { bbox, values };
        hf.check_valid()?;
        Ok(hf)
    }

    /// Construction without the validity check, for hot paths that guarantee
    /// it structurally. Checked in debug builds.
    pub fn new_unchecked(bbox: LatticeBox, values: Vec<i64>) -> Self {
        let hf = HeightFunction { bbox, values };
        debug_assert!(hf.check_valid().is_ok());
        hf
    }

    pub fn check_valid(&self) -> Result<()> {
        for x in self.bbox.sites() {
            let hx = self.value(&x);
            for i in 0..self.bbox.dim() {
                let mut y = x.clone();
                y[i] += 1;
                if self.bbox.contains(&y) && (hx - self.value(&y)).abs() != 1 {
                    return Err(Error::NonExtendable {
                        x: x.clone(),
                        y: y.clone(),
                        hx,
                        hy: self.value(&y),
                        dist: 1,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn bbox(&self) -> &LatticeBox {
        &self.bbox
    }

    pub fn value(&self, x: &[i64]) -> i64 {
        self.values[self.bbox.index_of(x)]
    }

    pub fn value_at_index(&self, idx: usize) -> i64 {
        self.values[idx]
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [i64] {
        &mut self.values
    }

    /// Restriction to the inner boundary. Always extendable (the function
    /// itself is an extension).
    pub fn restrict_to_boundary(&self) -> BoundaryHeightFunction {
        let values = self
            .bbox
            .inner_boundary()
            .into_iter()
            .map(|x| {
                let h = self.value(&x);
                (x, h)
            })
            .collect();
        BoundaryHeightFunction {
            bbox: self.bbox.clone(),
            values,
        }
    }
}

/// Boundary data: integer heights on the inner boundary of a box.
///
/// Extendability to a full height function is equivalent to the pairwise
/// condition |h(x)-h(y)| <= d(x,y) together with h(x)-h(y) = d(x,y) (mod 2),
/// d being the l1 distance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryHeightFunction {
    bbox: LatticeBox,
    /// (site, value) pairs in raster order over the inner boundary.
    values: Vec<(Site, i64)>,
}

impl BoundaryHeightFunction {
    /// Builds from a value assignment for every inner-boundary site (raster
    /// order). Does not check extendability; see [`Self::check_extendable`].
    pub fn new(bbox: LatticeBox, boundary_values: Vec<i64>) -> Result<Self> {
        let sites = bbox.inner_boundary();
        if sites.len() != boundary_values.len() {
            return Err(Error::validation(
                "values",
                format!(
                    "expected {} boundary values, got {}",
                    sites.len(),
                    boundary_values.len()
                ),
            ));
        }
        Ok(BoundaryHeightFunction {
            bbox,
            values: sites.into_iter().zip(boundary_values).collect(),
        })
    }

    pub fn from_fn(bbox: LatticeBox, f: impl Fn(&[i64]) -> i64) -> Self {
        let values = bbox.inner_boundary().into_iter().map(|x| {
            let v = f(&x);
            (x, v)
        });
        BoundaryHeightFunction {
            bbox: bbox.clone(),
            values: values.collect(),
        }
    }

    pub fn bbox(&self) -> &LatticeBox {
        &self.bbox
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Site, i64)> {
        self.values.iter().map(|(x, v)| (x, *v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, x: &[i64]) -> Option<i64> {
        self.values.iter().find(|(s, _)| s == x).map(|(_, v)| *v)
    }

    /// Pairwise Lipschitz and parity check; the first violating pair is the
    /// witness.
    pub fn check_extendable(&self) -> Result<()> {
        for (i, (x, hx)) in self.values.iter().enumerate() {
            for (y, hy) in &self.values[i + 1..] {
                let d = l1_dist(x, y);
                let diff = hx - hy;
                if diff.abs() > d || (diff - d).rem_euclid(2) != 0 {
                    return Err(Error::NonExtendable {
                        x: x.clone(),
                        y: y.clone(),
                        hx: *hx,
                        hy: *hy,
                        dist: d,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Wire schema for height data: {lo, hi, values: [{site, h}]}.
#[derive(Serialize, Deserialize)]
struct HeightDataRepr {
    lo: Vec<i64>,
    hi: Vec<i64>,
    values: Vec<SiteValue>,
}

#[derive(Serialize, Deserialize)]
struct SiteValue {
    site: Vec<i64>,
    h: i64,
}

impl Serialize for BoundaryHeightFunction {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        HeightDataRepr {
            lo: self.bbox.lo().to_vec(),
            hi: self.bbox.hi().to_vec(),
            values: self
                .values
                .iter()
                .map(|(site, h)| SiteValue { site: site.clone(), h: *h })
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BoundaryHeightFunction {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = HeightDataRepr::deserialize(deserializer)?;
        let bbox = LatticeBox::new(repr.lo, repr.hi).map_err(serde::de::Error::custom)?;
        let mut by_site: std::collections::BTreeMap<Site, i64> =
            repr.values.into_iter().map(|sv| (sv.site, sv.h)).collect();
        let sites = bbox.inner_boundary();
        let mut values = Vec::with_capacity(sites.len());
        for site in sites {
            match by_site.remove(&site) {
                Some(h) => values.push((site, h)),
                None => {
                    return Err(serde::de::Error::custom(format!(
                        "missing boundary value at site {site:?}"
                    )))
                }
            }
        }
        if let Some((site, _)) = by_site.into_iter().next() {
            return Err(serde::de::Error::custom(format!(
                "site {site:?} is not on the inner boundary"
            )));
        }
        Ok(BoundaryHeightFunction { bbox, values })
    }
}

impl Serialize for HeightFunction {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        HeightDataRepr {
            lo: self.bbox.lo().to_vec(),
            hi: self.bbox.hi().to_vec(),
            values: self
                .bbox
                .sites()
                .zip(&self.values)
                .map(|(site, h)| SiteValue { site, h: *h })
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for HeightFunction {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = HeightDataRepr::deserialize(deserializer)?;
        let bbox = LatticeBox::new(repr.lo, repr.hi).map_err(serde::de::Error::custom)?;
        let mut values = vec![None; bbox.site_count()];
        for sv in repr.values {
            if !bbox.contains(&sv.site) {
                return Err(serde::de::Error::custom(format!(
                    "site {:?} outside the box",
                    sv.site
                )));
            }
            values[bbox.index_of(&sv.site)] = Some(sv.h);
        }
        let values: Option<Vec<i64>> = values.into_iter().collect();
        let values =
            values.ok_or_else(|| serde::de::Error::custom("missing a site value"))?;
        HeightFunction::new(bbox, values).map_err(serde::de::Error::custom)
    }
}

/// Pointwise Kirszbraun envelope of boundary data.
///
/// `h_max(x) = min_y (h(y) + d(x,y))` and `h_min(x) = max_y (h(y) - d(x,y))`
/// over boundary sites y; every extension lies between the two, and both
/// bounds are themselves extensions when the data is extendable.
#[derive(Debug, Clone)]
pub struct Envelope {
    pub h_min: Vec<i64>,
    pub h_max: Vec<i64>,
}

pub fn kirszbraun_envelope(bbox: &LatticeBox, hb: &BoundaryHeightFunction) -> Result<Envelope> {
    if hb.bbox() != bbox {
        return Err(Error::validation("hb", "boundary data is for a different box"));
    }
    hb.check_extendable()?;
    let n = bbox.site_count();
    let mut h_min = vec![i64::MIN; n];
    let mut h_max = vec![i64::MAX; n];
    for (idx, x) in bbox.sites().enumerate() {
        for (y, hy) in hb.iter() {
            let d = l1_dist(&x, y);
            h_min[idx] = h_min[idx].max(hy - d);
            h_max[idx] = h_max[idx].min(hy + d);
        }
        debug_assert!(h_min[idx] <= h_max[idx]);
        debug_assert_eq!((h_min[idx] - h_max[idx]).rem_euclid(2), 0);
    }
    Ok(Envelope { h_min, h_max })
}

/// The maximal extension of extendable boundary data.
pub fn kirszbraun_extend(
    bbox: &LatticeBox,
    hb: &BoundaryHeightFunction,
) -> Result<HeightFunction> {
    let env = kirszbraun_envelope(bbox, hb)?;
    Ok(HeightFunction::new_unchecked(bbox.clone(), env.h_max))
}
