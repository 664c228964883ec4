//! Wire types shared by the service, the client, and the CLI. Responses
//! mostly re-export the core report structs, which already serialize.

use serde::{Deserialize, Serialize};

use tension_core::field::FieldSpec;
use tension_core::sampler::SampleParams;
use tension_core::solver::{BoundaryData, MinimizeParams, Region};
use tension_core::tension::SurfaceTensionTable;

/// A box given either as the cube S_n in dimension m or explicitly.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoxSpec {
    Cube { m: usize, n: i64 },
    Explicit { lo: Vec<i64>, hi: Vec<i64> },
}

impl BoxSpec {
    pub fn build(&self) -> tension_core::Result<tension_core::LatticeBox> {
        match self {
            BoxSpec::Cube { m, n } => tension_core::LatticeBox::cube(*m, *n),
            BoxSpec::Explicit { lo, hi } => {
                tension_core::LatticeBox::new(lo.clone(), hi.clone())
            }
        }
    }
}

/// One boundary value in the wire schema {site, h}.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundarySite {
    pub site: Vec<i64>,
    pub h: i64,
}

pub fn boundary_from_entries(
    bbox: &tension_core::LatticeBox,
    entries: &[BoundarySite],
) -> tension_core::Result<tension_core::BoundaryHeightFunction> {
    let sites = bbox.inner_boundary();
    let by_site: std::collections::BTreeMap<&[i64], i64> =
        entries.iter().map(|e| (e.site.as_slice(), e.h)).collect();
    let mut values = Vec::with_capacity(sites.len());
    for site in &sites {
        match by_site.get(site.as_slice()) {
            Some(&h) => values.push(h),
            None => {
                return Err(tension_core::Error::validation(
                    "boundary",
                    format!("missing value at boundary site {site:?}"),
                ))
            }
        }
    }
    tension_core::BoundaryHeightFunction::new(bbox.clone(), values)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnumerateRequest {
    #[serde(flatten)]
    pub bbox: BoxSpec,
    /// Slope for the canonical boundary; ignored when `boundary` is given.
    pub s: Option<Vec<f64>>,
    /// Explicit boundary values; overrides the canonical boundary.
    pub boundary: Option<Vec<BoundarySite>>,
    pub field: FieldSpec,
    /// Also materialize the exact distribution (subject to `cap`).
    #[serde(default)]
    pub distribution: bool,
    pub cap: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnumerateResponse {
    /// Exact extension count; a JSON number when it fits in u64, otherwise a
    /// decimal string.
    pub count: serde_json::Value,
    pub log_z: f64,
    /// Per-configuration (Hamiltonian, probability), indexed by the
    /// enumeration order, when requested.
    pub distribution: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensionKindRequest {
    Fixed,
    Free,
    Annealed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensionRequest {
    pub kind: TensionKindRequest,
    pub s: Vec<f64>,
    pub n: i64,
    pub field: FieldSpec,
    pub delta: Option<f64>,
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensionResponse {
    pub samples: Vec<tension_core::tension::TensionSample>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRequest {
    pub s: Vec<f64>,
    pub field: FieldSpec,
    pub n_list: Vec<i64>,
    /// When set, also estimate the cross-realization std per n.
    pub cross_samples: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResponse {
    pub fixed: Vec<tension_core::tension::TensionSample>,
    pub homogenization: Option<Vec<tension_core::tension::HomogenizationPoint>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SandwichRequest {
    pub s: Vec<f64>,
    pub n: i64,
    pub delta: f64,
    pub field: FieldSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuperaddCheck {
    Defect,
    Maximal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuperaddRequest {
    pub check: SuperaddCheck,
    pub m: usize,
    pub s: Vec<f64>,
    pub field: FieldSpec,
    /// Defect: number of random partitions; maximal: Monte Carlo trials.
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub strict: bool,
    pub max_extent: Option<i64>,
    pub alpha: Option<f64>,
    pub n_max: Option<i64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuperaddResponse {
    pub defects: Option<Vec<tension_core::superadd::DefectReport>>,
    pub maximal: Option<tension_core::superadd::MaximalProbeReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverRequest {
    pub m: usize,
    /// The n = 2 demo instance on {0..9} when sites are omitted.
    pub sites: Option<Vec<Vec<i64>>>,
    pub sizes: Option<Vec<i64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverResponse {
    pub selected_sites: Vec<Vec<i64>>,
    #[serde(flatten)]
    pub result: tension_core::superadd::CoverResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaRequest {
    pub s: Vec<f64>,
    pub field: FieldSpec,
    pub n_list: Vec<i64>,
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaResponse {
    pub points: Vec<tension_core::superadd::GammaPoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleRequest {
    #[serde(flatten)]
    pub bbox: BoxSpec,
    /// Slope for the canonical boundary; ignored when `boundary` is given.
    pub s: Option<Vec<f64>>,
    /// Explicit boundary values; overrides the canonical boundary.
    pub boundary: Option<Vec<BoundarySite>>,
    pub field: FieldSpec,
    #[serde(flatten)]
    pub params: SampleParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleResponse {
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
    /// Heights in raster order (axis 0 fastest), one row per sample.
    pub samples: Vec<Vec<i64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConcentrateRequest {
    pub s: Vec<f64>,
    pub n: i64,
    pub field: FieldSpec,
    pub delta: f64,
    pub eps: f64,
    #[serde(flatten)]
    pub params: SampleParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TabulateRequest {
    pub field: FieldSpec,
    pub n: i64,
    pub samples: usize,
    pub m: usize,
    pub grid_points: usize,
    pub margin: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TableInput {
    Inline { table: SurfaceTensionTable },
    /// ent(s) = |s|^2 on a symmetric grid; the strictly convex test table.
    Quadratic { m: usize, grid_points: usize, margin: Option<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveRequest {
    pub region: Region,
    pub boundary: BoundaryData,
    pub table: TableInput,
    pub params: Option<MinimizeParams>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveResponse {
    pub nodes: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub report: tension_core::solver::MinimizeReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidateRequest {
    pub command: String,
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Violation {
    pub param: String,
    pub constraint: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidateResponse {
    pub violations: Vec<Violation>,
}

/// Error envelope returned by every endpoint on failure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApiErrorBody {
    pub error: ApiErrorDetail,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApiErrorDetail {
    pub kind: ApiErrorKind,
    pub param: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiErrorKind {
    Validation,
    Infeasible,
    Internal,
}

impl From<&tension_core::Error> for ApiErrorDetail {
    fn from(e: &tension_core::Error) -> Self {
        use tension_core::Error as E;
        match e {
            E::Validation { param, constraint } => ApiErrorDetail {
                kind: ApiErrorKind::Validation,
                param: Some(param.clone()),
                message: constraint.clone(),
            },
            E::NonExtendable { .. } | E::EmptyConfigurationSet(_) | E::Inadmissible(_) => {
                ApiErrorDetail {
                    kind: ApiErrorKind::Validation,
                    param: None,
                    message: e.to_string(),
                }
            }
            E::Infeasible(msg) => ApiErrorDetail {
                kind: ApiErrorKind::Infeasible,
                param: None,
                message: msg.clone(),
            },
            E::Io(e) => ApiErrorDetail {
                kind: ApiErrorKind::Internal,
                param: None,
                message: e.to_string(),
            },
        }
    }
}

/// Route paths, shared so the client and server cannot drift apart.
pub mod paths {
    pub const ENUMERATE: &str = "/api/v1/enumerate";
    pub const TENSION: &str = "/api/v1/tension";
    pub const SWEEP: &str = "/api/v1/sweep";
    pub const SANDWICH: &str = "/api/v1/sandwich";
    pub const SUPERADD: &str = "/api/v1/superadd";
    pub const COVER: &str = "/api/v1/cover";
    pub const GAMMA: &str = "/api/v1/gamma";
    pub const SAMPLE: &str = "/api/v1/sample";
    pub const CONCENTRATE: &str = "/api/v1/concentrate";
    pub const TABULATE: &str = "/api/v1/tabulate";
    pub const SOLVE: &str = "/api/v1/solve";
    pub const VALIDATE: &str = "/api/v1/validate";
    pub const HEALTH: &str = "/healthz";
}
