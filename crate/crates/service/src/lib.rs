//! Axum service exposing the exact engines, the samplers, and the solver
//! over HTTP/JSON. Handlers are thin: validate, run the core operation on
//! the blocking pool, map errors to the wire envelope.

use axum::extract::Json;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use num_traits::ToPrimitive;

use tension_api as api;
use tension_core::boundary::{canonical_boundary, Slope};
use tension_core::field::Field;
use tension_core::tension::{SlopeGrid, SurfaceTensionTable};
use tension_core::Error as CoreError;

pub struct ApiError(api::ApiErrorDetail);

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        ApiError((&e).into())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self.0.kind {
            api::ApiErrorKind::Validation => StatusCode::BAD_REQUEST,
            api::ApiErrorKind::Infeasible => StatusCode::UNPROCESSABLE_ENTITY,
            api::ApiErrorKind::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(api::ApiErrorBody { error: self.0 })).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Runs a core computation on the blocking pool.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> tension_core::Result<T> + Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(join) => Err(ApiError(api::ApiErrorDetail {
            kind: api::ApiErrorKind::Internal,
            param: None,
            message: format!("worker panicked: {join}"),
        })),
    }
}

async fn health() -> &'static str {
    "ok"
}

fn boundary_for(
    bbox: &tension_core::LatticeBox,
    s: &Option<Vec<f64>>,
    boundary: &Option<Vec<api::BoundarySite>>,
) -> tension_core::Result<tension_core::BoundaryHeightFunction> {
    match (boundary, s) {
        (Some(entries), _) => api::boundary_from_entries(bbox, entries),
        (None, Some(s)) => canonical_boundary(bbox, &Slope::new(s.clone())?),
        (None, None) => Err(CoreError::validation(
            "s",
            "either a slope or explicit boundary values are required",
        )),
    }
}

async fn enumerate(Json(req): Json<api::EnumerateRequest>) -> ApiResult<api::EnumerateResponse> {
    let out = blocking(move || {
        let bbox = req.bbox.build()?;
        let field = Field::new(req.field.clone())?;
        let hb = boundary_for(&bbox, &req.s, &req.boundary)?;
        let count = tension_core::gibbs::count_extensions(&bbox, &hb)?;
        let log_z = tension_core::gibbs::log_partition(&bbox, &hb, &field)?.value;
        let count_json = match count.to_u64() {
            Some(v) => serde_json::Value::from(v),
            None => serde_json::Value::from(count.to_string()),
        };
        let distribution = if req.distribution {
            let cap = req.cap.unwrap_or(tension_core::gibbs::DEFAULT_ENUMERATION_CAP);
            let dist = tension_core::gibbs::exact_distribution(&bbox, &hb, &field, cap)?;
            Some(dist.hamiltonians.into_iter().zip(dist.probs).collect())
        } else {
            None
        };
        Ok(api::EnumerateResponse { count: count_json, log_z, distribution })
    })
    .await?;
    Ok(Json(out))
}

async fn tension(Json(req): Json<api::TensionRequest>) -> ApiResult<api::TensionResponse> {
    use tension_core::tension::{ent_annealed, ent_fixed, ent_free, TensionKind, TensionSample};
    let out = blocking(move || {
        let s = Slope::new(req.s.clone())?;
        let sample = match req.kind {
            api::TensionKindRequest::Fixed => {
                let field = Field::new(req.field.clone())?;
                TensionSample {
                    s: req.s.clone(),
                    n: req.n,
                    value: ent_fixed(&s, req.n, &field)?,
                    kind: TensionKind::Fixed,
                    fingerprint: tension_core::field::EdgeField::fingerprint(&field),
                }
            }
            api::TensionKindRequest::Free => {
                let delta = req.delta.ok_or_else(|| {
                    CoreError::validation("delta", "delta required for free tension")
                })?;
                let field = Field::new(req.field.clone())?;
                TensionSample {
                    s: req.s.clone(),
                    n: req.n,
                    value: ent_free(&s, req.n, delta, &field)?,
                    kind: TensionKind::Free { delta },
                    fingerprint: tension_core::field::EdgeField::fingerprint(&field),
                }
            }
            api::TensionKindRequest::Annealed => {
                let samples = req.samples.ok_or_else(|| {
                    CoreError::validation("samples", "samples required for annealed tension")
                })?;
                let (value, stderr) = ent_annealed(&s, req.n, &req.field, samples)?;
                TensionSample {
                    s: req.s.clone(),
                    n: req.n,
                    value,
                    kind: TensionKind::Annealed { stderr, samples },
                    fingerprint: req.field.seed,
                }
            }
        };
        Ok(api::TensionResponse { samples: vec![sample] })
    })
    .await?;
    Ok(Json(out))
}

async fn sweep(Json(req): Json<api::SweepRequest>) -> ApiResult<api::SweepResponse> {
    let out = blocking(move || {
        let s = Slope::new(req.s.clone())?;
        let field = Field::new(req.field.clone())?;
        let fixed = tension_core::tension::convergence_study(&s, &field, &req.n_list)?;
        let homogenization = match req.cross_samples {
            Some(samples) => Some(tension_core::tension::homogenization_study(
                &s,
                &req.field,
                &req.n_list,
                samples,
            )?),
            None => None,
        };
        Ok(api::SweepResponse { fixed, homogenization })
    })
    .await?;
    Ok(Json(out))
}

async fn sandwich(
    Json(req): Json<api::SandwichRequest>,
) -> ApiResult<tension_core::tension::SandwichReport> {
    let out = blocking(move || {
        let s = Slope::new(req.s.clone())?;
        let field = Field::new(req.field.clone())?;
        tension_core::tension::sandwich_check(&s, req.n, req.delta, &field)
    })
    .await?;
    Ok(Json(out))
}

async fn superadd(Json(req): Json<api::SuperaddRequest>) -> ApiResult<api::SuperaddResponse> {
    use tension_core::superadd;
    let out = blocking(move || {
        let s = Slope::new(req.s.clone())?;
        if s.dim() != req.m {
            return Err(CoreError::validation("s", "slope dimension must equal m"));
        }
        match req.check {
            api::SuperaddCheck::Defect => {
                let max_extent = req.max_extent.unwrap_or(if req.m == 1 { 10 } else { 8 });
                let mut defects = Vec::with_capacity(req.trials);
                for t in 0..req.trials {
                    let partition = superadd::random_partition(
                        req.m,
                        max_extent,
                        tension_core::util::task_seed(req.seed, t as u64),
                    )?;
                    let field = Field::new(req.field.reseeded(tension_core::util::task_seed(
                        req.field.seed,
                        t as u64,
                    )))?;
                    defects.push(superadd::superadditivity_defect(
                        &partition, &field, &s, req.strict,
                    )?);
                }
                Ok(api::SuperaddResponse { defects: Some(defects), maximal: None })
            }
            api::SuperaddCheck::Maximal => {
                let alpha = req
                    .alpha
                    .ok_or_else(|| CoreError::validation("alpha", "alpha required"))?;
                let n_max = req
                    .n_max
                    .ok_or_else(|| CoreError::validation("n_max", "n_max required"))?;
                let probe = superadd::maximal_inequality_probe(
                    &req.field, &s, alpha, n_max, req.trials,
                )?;
                Ok(api::SuperaddResponse { defects: None, maximal: Some(probe) })
            }
        }
    })
    .await?;
    Ok(Json(out))
}

async fn cover(Json(req): Json<api::CoverRequest>) -> ApiResult<api::CoverResponse> {
    use tension_core::superadd::{wiener_cover, CoverInstance};
    let out = blocking(move || {
        let (sites, sizes) = match (req.sites.clone(), req.sizes.clone()) {
            (Some(sites), Some(sizes)) => (sites, sizes),
            (None, None) => {
                // The demo instance: W = {0..9}^m collapsed to the axis for
                // m = 1, n(u) = 2 everywhere.
                if req.m != 1 {
                    return Err(CoreError::validation(
                        "sites",
                        "demo instance is 1-dimensional; pass sites/sizes for m > 1",
                    ));
                }
                ((0..10).map(|i| vec![i]).collect(), vec![2; 10])
            }
            _ => {
                return Err(CoreError::validation(
                    "sites",
                    "sites and sizes must be given together",
                ))
            }
        };
        let inst = CoverInstance::new(sites, sizes)?;
        let result = wiener_cover(&inst, req.m)?;
        let selected_sites =
            result.selected.iter().map(|&i| inst.sites[i].clone()).collect();
        Ok(api::CoverResponse { selected_sites, result })
    })
    .await?;
    Ok(Json(out))
}

async fn gamma(Json(req): Json<api::GammaRequest>) -> ApiResult<api::GammaResponse> {
    let out = blocking(move || {
        let s = Slope::new(req.s.clone())?;
        let points = tension_core::superadd::empirical_gamma(
            &req.field, &s, &req.n_list, req.samples,
        )?;
        Ok(api::GammaResponse { points })
    })
    .await?;
    Ok(Json(out))
}

async fn sample(Json(req): Json<api::SampleRequest>) -> ApiResult<api::SampleResponse> {
    let out = blocking(move || {
        let bbox = req.bbox.build()?;
        let field = Field::new(req.field.clone())?;
        let hb = boundary_for(&bbox, &req.s, &req.boundary)?;
        let draws = tension_core::sampler::sample(&bbox, &hb, &field, &req.params)?;
        Ok(api::SampleResponse {
            lo: bbox.lo().to_vec(),
            hi: bbox.hi().to_vec(),
            samples: draws.into_iter().map(|h| h.values().to_vec()).collect(),
        })
    })
    .await?;
    Ok(Json(out))
}

async fn concentrate(
    Json(req): Json<api::ConcentrateRequest>,
) -> ApiResult<tension_core::sampler::ConcentrationReport> {
    let out = blocking(move || {
        let s = Slope::new(req.s.clone())?;
        let field = Field::new(req.field.clone())?;
        tension_core::sampler::concentration_experiment(
            &s, req.n, &field, req.delta, req.eps, &req.params,
        )
    })
    .await?;
    Ok(Json(out))
}

async fn tabulate(Json(req): Json<api::TabulateRequest>) -> ApiResult<SurfaceTensionTable> {
    let out = blocking(move || {
        let grid =
            SlopeGrid::symmetric(req.m, req.grid_points, req.margin.unwrap_or(0.05))?;
        tension_core::tension::tabulate_tension(&req.field, req.n, req.samples, grid)
    })
    .await?;
    Ok(Json(out))
}

fn build_table(input: &api::TableInput) -> tension_core::Result<SurfaceTensionTable> {
    match input {
        api::TableInput::Inline { table } => {
            if !table.is_convexified {
                return Err(CoreError::validation("table", "convexified table required"));
            }
            Ok(table.clone())
        }
        api::TableInput::Quadratic { m, grid_points, margin } => {
            let grid = SlopeGrid::symmetric(*m, *grid_points, margin.unwrap_or(0.05))?;
            Ok(SurfaceTensionTable::synthetic_convex(grid, |s| {
                s.iter().map(|v| v * v).sum()
            }))
        }
    }
}

async fn solve(Json(req): Json<api::SolveRequest>) -> ApiResult<api::SolveResponse> {
    let out = blocking(move || {
        let table = build_table(&req.table)?;
        let params = req.params.clone().unwrap_or_default();
        let (profile, report) =
            tension_core::solver::minimize(&req.region, &req.boundary, &table, &params)?;
        Ok(api::SolveResponse {
            nodes: profile.grid.nodes.clone(),
            values: profile.values,
            report,
        })
    })
    .await?;
    Ok(Json(out))
}

/// Re-parses a command config and reports constraint violations without
/// running anything heavy.
async fn validate(Json(req): Json<api::ValidateRequest>) -> ApiResult<api::ValidateResponse> {
    let out = blocking(move || Ok(validate_config(&req.command, &req.config))).await?;
    Ok(Json(out))
}

pub fn validate_config(command: &str, config: &serde_json::Value) -> api::ValidateResponse {
    let mut violations: Vec<api::Violation> = Vec::new();
    fn push_err(out: &mut Vec<api::Violation>, param: &str, constraint: String) {
        out.push(api::Violation { param: param.into(), constraint });
    }
    fn check(out: &mut Vec<api::Violation>, r: tension_core::Result<()>) {
        if let Err(e) = r {
            match e {
                CoreError::Validation { param, constraint } => {
                    out.push(api::Violation { param, constraint })
                }
                other => out.push(api::Violation {
                    param: "config".into(),
                    constraint: other.to_string(),
                }),
            }
        }
    }
    let slope_of = |v: &serde_json::Value| -> Option<Vec<f64>> {
        v.get("s").and_then(|s| serde_json::from_value(s.clone()).ok())
    };
    let field_of = |v: &serde_json::Value| -> Option<tension_core::field::FieldSpec> {
        v.get("field").and_then(|f| serde_json::from_value(f.clone()).ok())
    };
    if let Some(s) = slope_of(config) {
        check(&mut violations, Slope::new(s.clone()).map(|_| ()));
        if command == "sandwich" {
            if let Ok(slope) = Slope::new(s) {
                check(&mut violations, slope.require_strict("s"));
            }
        }
    }
    if let Some(f) = field_of(config) {
        check(&mut violations, f.validate());
    }
    if let Some(delta) = config.get("delta").and_then(|d| d.as_f64()) {
        if delta <= 0.0 {
            push_err(&mut violations, "delta", "delta > 0 required".into());
        }
    }
    if let Some(eps) = config.get("eps").and_then(|d| d.as_f64()) {
        if eps <= 0.0 {
            push_err(&mut violations, "eps", "eps > 0 required".into());
        }
    }
    if let Some(n) = config.get("n").and_then(|d| d.as_i64()) {
        if n < 1 {
            push_err(&mut violations, "n", "n >= 1 required".into());
        }
    }
    if let Some(samples) = config.get("samples").and_then(|d| d.as_u64()) {
        let needs_two = matches!(command, "tension" | "gamma" | "tabulate");
        if needs_two && samples < 2 {
            push_err(&mut violations, "samples", "samples >= 2 required".into());
        }
    }
    api::ValidateResponse { violations }
}

pub fn router() -> Router {
    Router::new()
        .route(api::paths::HEALTH, get(health))
        .route(api::paths::ENUMERATE, post(enumerate))
        .route(api::paths::TENSION, post(tension))
        .route(api::paths::SWEEP, post(sweep))
        .route(api::paths::SANDWICH, post(sandwich))
        .route(api::paths::SUPERADD, post(superadd))
        .route(api::paths::COVER, post(cover))
        .route(api::paths::GAMMA, post(gamma))
        .route(api::paths::SAMPLE, post(sample))
        .route(api::paths::CONCENTRATE, post(concentrate))
        .route(api::paths::TABULATE, post(tabulate))
        .route(api::paths::SOLVE, post(solve))
        .route(api::paths::VALIDATE, post(validate))
}

/// Binds an ephemeral local port and serves in a background task. Used by
/// the CLI when no external server is given, and by the test suites.
pub async fn spawn_ephemeral() -> std::io::Result<(std::net::SocketAddr, tokio::task::JoinHandle<()>)>
{
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", 0)).await?;
    let addr = listener.local_addr()?;
    let handle = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, router()).await {
            tracing::error!("service stopped: {e}");
        }
    });
    Ok((addr, handle))
}

/// Serves on a fixed address until the process exits.
pub async fn serve(addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {addr}");
    axum::serve(listener, router()).await
}
