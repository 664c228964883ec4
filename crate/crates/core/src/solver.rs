//! Macroscopic side of the variational principle: minimize the integral of
//! ent(grad h) over 1-Lipschitz profiles with given boundary data, using a
//! convexified surface-tension table.
//!
//! Projected subgradient descent on grid node values: subgradients come from
//! the active interpolation simplex of the table, steps shrink like c/sqrt(k),
//! and every iterate is projected back onto the Lipschitz polytope by cyclic
//! pairwise clipping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tension::SurfaceTensionTable;

/// Weight of the quadratic penalty for gradients that leave the table domain
/// (the Lipschitz projection keeps |grad|_inf <= 1, but tables carry a
/// margin).
const OUT_OF_TABLE_PENALTY: f64 = 10.0;

/// Tolerance for the Lipschitz projection fixed point.
const PROJECT_TOL: f64 = 1e-10;

/// A polygonal region with a square grid of spacing eps.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    Interval { a: f64, b: f64, eps: f64 },
    Polygon { vertices: Vec<[f64; 2]>, eps: f64 },
}

impl Region {
    pub fn unit_square(eps: f64) -> Region {
        Region::Polygon {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            eps,
        }
    }

    pub fn unit_interval(eps: f64) -> Region {
        Region::Interval { a: 0.0, b: 1.0, eps }
    }
}

/// Discretized region: grid nodes, boundary flags, grid edges, and complete
/// cells for the entropy quadrature.
#[derive(Debug, Clone)]
pub struct RegionGrid {
    pub m: usize,
    pub eps: f64,
    pub nodes: Vec<Vec<f64>>,
    pub is_boundary: Vec<bool>,
    /// Grid-adjacent node pairs (|x - y|_1 = eps).
    pub edges: Vec<(usize, usize)>,
    /// Complete cells as corner node indices; m = 1: [lo, hi, lo, hi].
    pub cells: Vec<[usize; 4]>,
}

fn point_in_polygon(p: [f64; 2], vertices: &[[f64; 2]], tol: f64) -> bool {
    // On-edge points count as inside.
    let n = vertices.len();
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let len2 = dx * dx + dy * dy;
        if len2 == 0.0 {
            continue;
        }
        let t = ((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2;
        if (0.0..=1.0).contains(&t) {
            let qx = a[0] + t * dx;
            let qy = a[1] + t * dy;
            if (p[0] - qx).abs() < tol && (p[1] - qy).abs() < tol {
                return true;
            }
        }
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = (vertices[i][0], vertices[i][1]);
        let (xj, yj) = (vertices[j][0], vertices[j][1]);
        if (yi > p[1]) != (yj > p[1]) {
            let x_cross = xj + (p[1] - yj) / (yi - yj) * (xi - xj);
            if p[0] < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

impl RegionGrid {
    pub fn build(region: &Region) -> Result<RegionGrid> {
        match region {
            Region::Interval { a, b, eps } => {
                if b.partial_cmp(a) != Some(std::cmp::Ordering::Greater) || eps.is_nan() || *eps <= 0.0 {
                    return Err(Error::validation("region", "need a < b and eps > 0"));
                }
                let steps = ((b - a) / eps).round() as usize;
                if steps < 2 || ((b - a) / eps - steps as f64).abs() > 1e-9 {
                    return Err(Error::validation(
                        "region",
                        "interval length must be a multiple of eps (>= 2 cells)",
                    ));
                }
                let nodes: Vec<Vec<f64>> = (0..=steps).map(|i| vec![a + i as f64 * eps]).collect();
                let count = nodes.len();
                let is_boundary: Vec<bool> =
                    (0..count).map(|i| i == 0 || i == count - 1).collect();
                let edges: Vec<(usize, usize)> = (0..count - 1).map(|i| (i, i + 1)).collect();
                let cells: Vec<[usize; 4]> =
                    (0..count - 1).map(|i| [i, i + 1, i, i + 1]).collect();
                Ok(RegionGrid { m: 1, eps: *eps, nodes, is_boundary, edges, cells })
            }
            Region::Polygon { vertices, eps } => {
                if vertices.len() < 3 {
                    return Err(Error::validation("region", "polygon needs >= 3 vertices"));
                }
                if eps.is_nan() || *eps <= 0.0 {
                    return Err(Error::validation("region", "eps > 0 required"));
                }
                let tol = 1e-9;
                let (mut x0, mut x1, mut y0, mut y1) =
                    (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
                for v in vertices {
                    x0 = x0.min(v[0]);
                    x1 = x1.max(v[0]);
                    y0 = y0.min(v[1]);
                    y1 = y1.max(v[1]);
                }
                // Nodes on the lattice eps*Z^2 intersected with the polygon.
                let i0 = (x0 / eps - tol).ceil() as i64;
                let i1 = (x1 / eps + tol).floor() as i64;
                let j0 = (y0 / eps - tol).ceil() as i64;
                let j1 = (y1 / eps + tol).floor() as i64;
                let mut index: std::collections::BTreeMap<(i64, i64), usize> =
                    std::collections::BTreeMap::new();
                let mut nodes = Vec::new();
                for j in j0..=j1 {
                    for i in i0..=i1 {
                        let p = [i as f64 * eps, j as f64 * eps];
                        if point_in_polygon(p, vertices, tol) {
                            index.insert((i, j), nodes.len());
                            nodes.push(vec![p[0], p[1]]);
                        }
                    }
                }
                if nodes.len() < 4 {
                    return Err(Error::validation("region", "grid too coarse for the region"));
                }
                let at = |i: i64, j: i64| index.get(&(i, j)).copied();
                let mut is_boundary = vec![false; nodes.len()];
                let mut edges = Vec::new();
                let mut cells = Vec::new();
                for (&(i, j), &id) in &index {
                    let nb = [at(i - 1, j), at(i + 1, j), at(i, j - 1), at(i, j + 1)];
                    if nb.iter().any(|n| n.is_none()) {
                        is_boundary[id] = true;
                    }
                    if let Some(r) = at(i + 1, j) {
                        edges.push((id, r));
                    }
                    if let Some(u) = at(i, j + 1) {
                        edges.push((id, u));
                    }
                    if let (Some(r), Some(u), Some(ru)) = (at(i + 1, j), at(i, j + 1), at(i + 1, j + 1))
                    {
                        cells.push([id, r, u, ru]);
                    }
                }
                Ok(RegionGrid { m: 2, eps: *eps, nodes, is_boundary, edges, cells })
            }
        }
    }

    pub fn boundary_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| self.is_boundary[i])
    }

    fn l1(&self, a: usize, b: usize) -> f64 {
        self.nodes[a]
            .iter()
            .zip(&self.nodes[b])
            .map(|(x, y)| (x - y).abs())
            .sum()
    }
}

/// Boundary data for the minimization.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryData {
    Affine { slope: Vec<f64>, offset: f64 },
    /// One value per boundary node, in node order.
    Values { values: Vec<f64> },
}

impl BoundaryData {
    fn values_for(&self, grid: &RegionGrid) -> Result<Vec<(usize, f64)>> {
        match self {
            BoundaryData::Affine { slope, offset } => {
                if slope.len() != grid.m {
                    return Err(Error::validation("boundary", "slope dimension mismatch"));
                }
                Ok(grid
                    .boundary_nodes()
                    .map(|i| {
                        let v = offset
                            + slope.iter().zip(&grid.nodes[i]).map(|(s, x)| s * x).sum::<f64>();
                        (i, v)
                    })
                    .collect())
            }
            BoundaryData::Values { values } => {
                let ids: Vec<usize> = grid.boundary_nodes().collect();
                if ids.len() != values.len() {
                    return Err(Error::validation(
                        "boundary",
                        format!("expected {} boundary values, got {}", ids.len(), values.len()),
                    ));
                }
                Ok(ids.into_iter().zip(values.iter().copied()).collect())
            }
        }
    }
}

/// A profile: one value per grid node.
#[derive(Debug, Clone)]
pub struct Profile {
    pub grid: RegionGrid,
    pub values: Vec<f64>,
}

/// Admissibility: every grid edge 1-Lipschitz (within 1e-9) and boundary
/// equalities satisfied. Returns the first witness on failure.
pub fn check_admissible(p: &Profile, boundary: &[(usize, f64)]) -> std::result::Result<(), String> {
    for &(u, v) in &p.grid.edges {
        let d = (p.values[u] - p.values[v]).abs();
        if d > p.grid.eps + 1e-9 {
            return Err(format!(
                "Lipschitz violation between nodes {:?} and {:?}: |dh| = {d}",
                p.grid.nodes[u], p.grid.nodes[v]
            ));
        }
    }
    for &(i, b) in boundary {
        if (p.values[i] - b).abs() > 1e-9 {
            return Err(format!(
                "boundary mismatch at {:?}: {} vs {}",
                p.grid.nodes[i], p.values[i], b
            ));
        }
    }
    Ok(())
}

/// Cell gradient by averaged forward differences. m = 1 cells use only the
/// first component.
fn cell_gradient(grid: &RegionGrid, values: &[f64], cell: &[usize; 4]) -> Vec<f64> {
    let e = grid.eps;
    match grid.m {
        1 => vec![(values[cell[1]] - values[cell[0]]) / e],
        _ => {
            let [ll, lr, ul, ur] = *cell;
            vec![
                (values[lr] + values[ur] - values[ll] - values[ul]) / (2.0 * e),
                (values[ul] + values[ur] - values[ll] - values[lr]) / (2.0 * e),
            ]
        }
    }
}

fn cell_area(grid: &RegionGrid) -> f64 {
    match grid.m {
        1 => grid.eps,
        _ => grid.eps * grid.eps,
    }
}

/// The discrete macroscopic entropy: sum over complete cells of cell area
/// times the interpolated tension at the cell gradient. Gradients outside
/// the table domain are clamped and charged a quadratic penalty.
pub fn macroscopic_entropy(p: &Profile, table: &SurfaceTensionTable) -> Result<f64> {
    if !table.is_convexified {
        return Err(Error::validation("table", "convexified table required"));
    }
    if table.grid.m != p.grid.m {
        return Err(Error::validation("table", "table dimension mismatch"));
    }
    for &(u, v) in &p.grid.edges {
        if (p.values[u] - p.values[v]).abs() > p.grid.eps + 1e-9 {
            return Err(Error::Inadmissible(format!(
                "Lipschitz violation between {:?} and {:?}",
                p.grid.nodes[u], p.grid.nodes[v]
            )));
        }
    }
    let area = cell_area(&p.grid);
    let mut acc = 0.0;
    for cell in &p.grid.cells {
        let g = cell_gradient(&p.grid, &p.values, cell);
        let (clamped, dist2) = table.clamp(&g);
        acc += area * (table.value(&clamped) + OUT_OF_TABLE_PENALTY * dist2);
    }
    Ok(acc)
}

fn entropy_subgradient(p: &Profile, table: &SurfaceTensionTable) -> Vec<f64> {
    let area = cell_area(&p.grid);
    let e = p.grid.eps;
    let mut g = vec![0.0; p.values.len()];
    for cell in &p.grid.cells {
        let grad = cell_gradient(&p.grid, &p.values, cell);
        let (clamped, _) = table.clamp(&grad);
        let mut dent = table.simplex_gradient(&clamped);
        for (d, gi) in dent.iter_mut().zip(&grad) {
            let (c, _) = table.clamp(std::slice::from_ref(gi));
            *d += 2.0 * OUT_OF_TABLE_PENALTY * (gi - c[0]);
        }
        match p.grid.m {
            1 => {
                let w = area * dent[0] / e;
                g[cell[0]] -= w;
                g[cell[1]] += w;
            }
            _ => {
                let [ll, lr, ul, ur] = *cell;
                let wx = area * dent[0] / (2.0 * e);
                let wy = area * dent[1] / (2.0 * e);
                g[ll] += -wx - wy;
                g[lr] += wx - wy;
                g[ul] += -wx + wy;
                g[ur] += wx + wy;
            }
        }
    }
    g
}

/// Projection onto the Lipschitz polytope by round-robin pairwise clipping,
/// iterated to a fixed point. Boundary nodes are pinned.
fn project_lipschitz(grid: &RegionGrid, values: &mut [f64], fixed: &[bool]) {
    let eps = grid.eps;
    for _ in 0..100_000 {
        let mut worst: f64 = 0.0;
        for &(u, v) in &grid.edges {
            let d = values[u] - values[v];
            let excess = d.abs() - eps;
            if excess > 0.0 {
                worst = worst.max(excess);
                let sign = d.signum();
                match (fixed[u], fixed[v]) {
                    (true, true) => {}
                    (true, false) => values[v] = values[u] - sign * eps,
                    (false, true) => values[u] = values[v] + sign * eps,
                    (false, false) => {
                        values[u] -= sign * excess / 2.0;
                        values[v] += sign * excess / 2.0;
                    }
                }
            }
        }
        if worst <= PROJECT_TOL {
            break;
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinimizeParams {
    pub max_iters: usize,
    /// Step size at iteration k is step_c / sqrt(k), applied to the
    /// sup-normalized subgradient (so no node ever moves more than the step).
    pub step_c: f64,
}

impl Default for MinimizeParams {
    fn default() -> Self {
        MinimizeParams { max_iters: 3000, step_c: 0.25 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinimizeReport {
    pub iterations: usize,
    pub entropy_trace: Vec<f64>,
    pub final_entropy: f64,
    pub initial_entropy: f64,
}

/// Minimizes the macroscopic entropy over admissible profiles extending the
/// boundary data. Deterministic given the parameters: initialization is the
/// continuum Kirszbraun extension min_y (b(y) + |x-y|_1), each step moves
/// along the table subgradient and projects back onto the constraints, and
/// the best iterate seen is returned.
pub fn minimize(
    region: &Region,
    boundary: &BoundaryData,
    table: &SurfaceTensionTable,
    params: &MinimizeParams,
) -> Result<(Profile, MinimizeReport)> {
    if !table.is_convexified {
        return Err(Error::validation("table", "convexified table required"));
    }
    let grid = RegionGrid::build(region)?;
    if table.grid.m != grid.m {
        return Err(Error::validation("table", "table dimension mismatch"));
    }
    let bvals = boundary.values_for(&grid)?;
    // Boundary data must be 1-Lipschitz along the boundary.
    for (a, &(i, vi)) in bvals.iter().enumerate() {
        for &(j, vj) in &bvals[a + 1..] {
            let d = grid.l1(i, j);
            if (vi - vj).abs() > d + 1e-9 {
                return Err(Error::Inadmissible(format!(
                    "boundary data violates the Lipschitz condition between {:?} and {:?}",
                    grid.nodes[i], grid.nodes[j]
                )));
            }
        }
    }
    let mut fixed = vec![false; grid.nodes.len()];
    for &(i, _) in &bvals {
        fixed[i] = true;
    }
    // Kirszbraun initialization.
    let mut values: Vec<f64> = (0..grid.nodes.len())
        .map(|x| {
            bvals
                .iter()
                .map(|&(y, b)| b + grid.l1(x, y))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    for &(i, b) in &bvals {
        values[i] = b;
    }
    project_lipschitz(&grid, &mut values, &fixed);

    let mut profile = Profile { grid, values };
    let initial_entropy = macroscopic_entropy(&profile, table)?;
    let mut best_values = profile.values.clone();
    let mut best_entropy = initial_entropy;
    let mut trace = vec![initial_entropy];

    for k in 1..=params.max_iters {
        let g = entropy_subgradient(&profile, table);
        let scale = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if scale == 0.0 {
            break;
        }
        let step = params.step_c / (k as f64).sqrt() / scale;
        for (i, v) in profile.values.iter_mut().enumerate() {
            if !fixed[i] {
                *v -= step * g[i];
            }
        }
        for &(i, b) in &bvals {
            profile.values[i] = b;
        }
        project_lipschitz(&profile.grid, &mut profile.values, &fixed);
        let entropy = macroscopic_entropy(&profile, table)?;
        if entropy < best_entropy {
            best_entropy = entropy;
            best_values.copy_from_slice(&profile.values);
        }
        trace.push(best_entropy);
    }
    profile.values = best_values;
    debug_assert!(check_admissible(&profile, &bvals).is_ok());
    let report = MinimizeReport {
        iterations: params.max_iters,
        entropy_trace: trace,
        final_entropy: best_entropy,
        initial_entropy,
    };
    Ok((profile, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tension::{SlopeGrid, SurfaceTensionTable};

    fn quad_table_2d(points: usize) -> SurfaceTensionTable {
        let grid = SlopeGrid::symmetric(2, points, 0.05).unwrap();
        SurfaceTensionTable::synthetic_convex(grid, |s| s[0] * s[0] + s[1] * s[1])
    }

    fn quad_table_1d(points: usize) -> SurfaceTensionTable {
        let grid = SlopeGrid::symmetric(1, points, 0.05).unwrap();
        SurfaceTensionTable::synthetic_convex(grid, |s| s[0] * s[0])
    }

    #[test]
    fn grid_of_unit_square() {
        let g = RegionGrid::build(&Region::unit_square(0.25)).unwrap();
        assert_eq!(g.nodes.len(), 25);
        assert_eq!(g.cells.len(), 16);
        assert_eq!(g.boundary_nodes().count(), 16);
    }

    #[test]
    fn affine_profile_entropy_matches_tension_times_area() {
        let table = quad_table_2d(33);
        let grid = RegionGrid::build(&Region::unit_square(1.0 / 16.0)).unwrap();
        let s = [0.5, 0.25];
        let values: Vec<f64> =
            grid.nodes.iter().map(|p| s[0] * p[0] + s[1] * p[1]).collect();
        let p = Profile { grid, values };
        let ent = macroscopic_entropy(&p, &table).unwrap();
        let exact = s[0] * s[0] + s[1] * s[1];
        assert!((ent - exact).abs() < 0.01 * exact.max(0.1), "{ent} vs {exact}");
    }

    #[test]
    fn zero_profile_entropy_is_zero_for_quadratic_table() {
        let table = quad_table_2d(21);
        let grid = RegionGrid::build(&Region::unit_square(0.125)).unwrap();
        let values = vec![0.0; grid.nodes.len()];
        let p = Profile { grid, values };
        let ent = macroscopic_entropy(&p, &table).unwrap();
        assert!(ent.abs() < 1e-12);
    }

    #[test]
    fn bump_increases_entropy_over_affine() {
        let table = quad_table_2d(33);
        let grid = RegionGrid::build(&Region::unit_square(0.125)).unwrap();
        let s = [0.3, 0.1];
        let affine: Vec<f64> = grid.nodes.iter().map(|p| s[0] * p[0] + s[1] * p[1]).collect();
        let mut bumped = affine.clone();
        for (i, p) in grid.nodes.iter().enumerate() {
            if !grid.is_boundary[i] {
                let bump = 0.1
                    * (std::f64::consts::PI * p[0]).sin()
                    * (std::f64::consts::PI * p[1]).sin();
                bumped[i] += bump;
            }
        }
        let base = macroscopic_entropy(&Profile { grid: grid.clone(), values: affine }, &table)
            .unwrap();
        let high =
            macroscopic_entropy(&Profile { grid, values: bumped }, &table).unwrap();
        assert!(high > base, "{high} <= {base}");
    }

    #[test]
    fn lipschitz_violation_is_rejected_with_witness() {
        let table = quad_table_2d(9);
        let grid = RegionGrid::build(&Region::unit_square(0.25)).unwrap();
        let mut values = vec![0.0; grid.nodes.len()];
        values[12] = 1.0; // interior spike
        let p = Profile { grid, values };
        assert!(macroscopic_entropy(&p, &table).is_err());
        let witness = check_admissible(&p, &[]);
        assert!(witness.is_err());
    }

    #[test]
    fn kirszbraun_initialization_is_admissible() {
        let table = quad_table_2d(9);
        let params = MinimizeParams { max_iters: 1, step_c: 0.5 };
        let boundary = BoundaryData::Affine { slope: vec![0.4, -0.2], offset: 0.1 };
        let (p, _) = minimize(&Region::unit_square(0.125), &boundary, &table, &params).unwrap();
        let grid = RegionGrid::build(&Region::unit_square(0.125)).unwrap();
        let bvals = boundary.values_for(&grid).unwrap();
        assert!(check_admissible(&p, &bvals).is_ok());
    }

    #[test]
    fn inadmissible_boundary_rejected_with_witness() {
        let table = quad_table_2d(9);
        let grid = RegionGrid::build(&Region::unit_square(0.25)).unwrap();
        let ids: Vec<usize> = grid.boundary_nodes().collect();
        let mut values = vec![0.0; ids.len()];
        values[0] = 5.0;
        let boundary = BoundaryData::Values { values };
        let r = minimize(&Region::unit_square(0.25), &boundary, &table, &MinimizeParams::default());
        assert!(matches!(r, Err(Error::Inadmissible(_))));
    }

    #[test]
    fn solver_recovers_affine_minimizer_2d() {
        let table = quad_table_2d(33);
        let eps = 1.0 / 32.0;
        let s = [0.5, 0.25];
        let boundary = BoundaryData::Affine { slope: s.to_vec(), offset: 0.0 };
        let params = MinimizeParams::default();
        let (p, report) =
            minimize(&Region::unit_square(eps), &boundary, &table, &params).unwrap();
        let mut sup: f64 = 0.0;
        for (i, node) in p.grid.nodes.iter().enumerate() {
            let affine = s[0] * node[0] + s[1] * node[1];
            sup = sup.max((p.values[i] - affine).abs());
        }
        assert!(sup <= 2.0 * eps, "sup distance {sup} > {}", 2.0 * eps);
        let exact = s[0] * s[0] + s[1] * s[1];
        assert!(
            (report.final_entropy - exact).abs() <= 0.01 * exact,
            "entropy {} vs {exact}",
            report.final_entropy
        );
        // Entropy trace of best iterates is non-increasing and at most the
        // initialization.
        for w in report.entropy_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        assert!(report.final_entropy <= report.initial_entropy);
    }

    #[test]
    fn solver_zero_boundary_gives_flat_zero_profile() {
        let table = quad_table_2d(17);
        let boundary = BoundaryData::Affine { slope: vec![0.0, 0.0], offset: 0.0 };
        let (p, report) = minimize(
            &Region::unit_square(1.0 / 16.0),
            &boundary,
            &table,
            &MinimizeParams::default(),
        )
        .unwrap();
        // Subgradient steps leave a wobble of the order of the final step.
        let sup = p.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(sup < 0.02, "sup {sup}");
        assert!(report.final_entropy.abs() < 6e-3, "{}", report.final_entropy);
    }

    #[test]
    fn solver_matches_1d_closed_form() {
        // ent(s) = s^2, b(0) = 0, b(1) = 1/2: the minimizer is the straight
        // line of slope 1/2 (strictly convex 1D variational problem).
        let table = quad_table_1d(33);
        let eps = 1.0 / 32.0;
        let boundary = BoundaryData::Values { values: vec![0.0, 0.5] };
        let (p, _) = minimize(
            &Region::unit_interval(eps),
            &boundary,
            &table,
            &MinimizeParams::default(),
        )
        .unwrap();
        let mut sup: f64 = 0.0;
        for (i, node) in p.grid.nodes.iter().enumerate() {
            sup = sup.max((p.values[i] - 0.5 * node[0]).abs());
        }
        assert!(sup <= eps, "sup {sup} > {eps}");
    }
}
