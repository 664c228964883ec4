//! End-to-end tests: every endpoint exercised through the typed client
//! against an in-process service on an ephemeral port.

use tension_api as api;
use tension_client::{ClientError, TensionClient};
use tension_core::field::FieldSpec;
use tension_core::sampler::SampleParams;

async fn client() -> TensionClient {
    let (addr, _handle) = tension_service::spawn_ephemeral().await.unwrap();
    // The handle is detached; the task lives as long as the runtime.
    TensionClient::new(format!("http://{addr}"))
}

fn zero_field() -> FieldSpec {
    FieldSpec::iid_uniform(0.0, 0)
}

#[tokio::test]
async fn health_and_enumerate() {
    let c = client().await;
    assert!(c.health().await.unwrap());
    let resp = c
        .enumerate(&api::EnumerateRequest {
            bbox: api::BoxSpec::Cube { m: 2, n: 3 },
            s: Some(vec![0.0, 0.0]),
            boundary: None,
            field: zero_field(),
            distribution: false,
            cap: None,
        })
        .await
        .unwrap();
    assert_eq!(resp.count, serde_json::json!(2));
    assert!((resp.log_z - 2.0f64.ln()).abs() < 1e-12);
}

#[tokio::test]
async fn enumerate_with_explicit_boundary() {
    let c = client().await;
    let resp = c
        .enumerate(&api::EnumerateRequest {
            bbox: api::BoxSpec::Explicit { lo: vec![0], hi: vec![5] },
            s: None,
            boundary: Some(vec![
                api::BoundarySite { site: vec![0], h: 0 },
                api::BoundarySite { site: vec![4], h: 0 },
            ]),
            field: zero_field(),
            distribution: true,
            cap: None,
        })
        .await
        .unwrap();
    assert_eq!(resp.count, serde_json::json!(6));
}

#[tokio::test]
async fn tension_fixed_matches_known_value() {
    let c = client().await;
    let resp = c
        .tension(&api::TensionRequest {
            kind: api::TensionKindRequest::Fixed,
            s: vec![0.0],
            n: 201,
            field: zero_field(),
            delta: None,
            samples: None,
        })
        .await
        .unwrap();
    assert!((resp.samples[0].value + 0.6754).abs() < 1e-3);
}

#[tokio::test]
async fn missing_delta_is_a_validation_error() {
    let c = client().await;
    let err = c
        .tension(&api::TensionRequest {
            kind: api::TensionKindRequest::Free,
            s: vec![0.0],
            n: 5,
            field: zero_field(),
            delta: None,
            samples: None,
        })
        .await
        .unwrap_err();
    assert_eq!(err.kind(), Some(api::ApiErrorKind::Validation));
}

#[tokio::test]
async fn oversized_box_is_infeasible() {
    let c = client().await;
    let err = c
        .enumerate(&api::EnumerateRequest {
            bbox: api::BoxSpec::Cube { m: 2, n: 40 },
            s: Some(vec![0.0, 0.0]),
            boundary: None,
            field: zero_field(),
            distribution: false,
            cap: None,
        })
        .await
        .unwrap_err();
    assert_eq!(err.kind(), Some(api::ApiErrorKind::Infeasible));
}

#[tokio::test]
async fn sandwich_frozen_slope_rejected() {
    let c = client().await;
    let err = c
        .sandwich(&api::SandwichRequest {
            s: vec![1.0, 0.0],
            n: 6,
            delta: 0.2,
            field: zero_field(),
        })
        .await
        .unwrap_err();
    match err {
        ClientError::Api { kind, param, .. } => {
            assert_eq!(kind, api::ApiErrorKind::Validation);
            assert_eq!(param.as_deref(), Some("s"));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[tokio::test]
async fn sample_stream_is_seed_deterministic() {
    let c = client().await;
    let req = api::SampleRequest {
        bbox: api::BoxSpec::Cube { m: 2, n: 5 },
        s: Some(vec![0.0, 0.0]),
        boundary: None,
        field: FieldSpec::iid_uniform(0.5, 11),
        params: SampleParams { samples: 5, burn_in: Some(50), thin: 2, seed: 9, random_scan: false },
    };
    let a = c.sample(&req).await.unwrap();
    let b = c.sample(&req).await.unwrap();
    assert_eq!(a.samples, b.samples);
    assert_eq!(a.samples.len(), 5);
}

#[tokio::test]
async fn cover_demo_greedy_selection() {
    let c = client().await;
    let resp = c
        .cover(&api::CoverRequest { m: 1, sites: None, sizes: None })
        .await
        .unwrap();
    let picked: Vec<i64> = resp.selected_sites.iter().map(|s| s[0]).collect();
    assert_eq!(picked, vec![0, 2, 4, 6, 8]);
    assert!(resp.result.disjoint && resp.result.bound_ok);
}

#[tokio::test]
async fn gamma_and_superadd_roundtrip() {
    let c = client().await;
    let gamma = c
        .gamma(&api::GammaRequest {
            s: vec![0.0, 0.0],
            field: FieldSpec::iid_uniform(0.5, 42),
            n_list: vec![3, 4],
            samples: 5,
        })
        .await
        .unwrap();
    assert_eq!(gamma.points.len(), 2);
    let sa = c
        .superadd(&api::SuperaddRequest {
            check: api::SuperaddCheck::Defect,
            m: 2,
            s: vec![0.3, -0.5],
            field: FieldSpec::iid_uniform(1.0, 4),
            trials: 5,
            seed: 11,
            strict: false,
            max_extent: Some(6),
            alpha: None,
            n_max: None,
        })
        .await
        .unwrap();
    let defects = sa.defects.unwrap();
    assert_eq!(defects.len(), 5);
    assert!(defects.iter().all(|d| d.pass));
}

#[tokio::test]
async fn solve_quadratic_1d() {
    let c = client().await;
    let resp = c
        .solve(&api::SolveRequest {
            region: tension_core::solver::Region::unit_interval(1.0 / 16.0),
            boundary: tension_core::solver::BoundaryData::Values { values: vec![0.0, 0.5] },
            table: api::TableInput::Quadratic { m: 1, grid_points: 17, margin: None },
            params: None,
        })
        .await
        .unwrap();
    for (node, value) in resp.nodes.iter().zip(&resp.values) {
        assert!((value - 0.5 * node[0]).abs() < 1.0 / 16.0);
    }
}

#[tokio::test]
async fn validate_reports_violations() {
    let c = client().await;
    let resp = c
        .validate(&api::ValidateRequest {
            command: "concentrate".into(),
            config: serde_json::json!({"s": [1.5, 0.0], "delta": -0.1}),
        })
        .await
        .unwrap();
    let params: Vec<&str> = resp.violations.iter().map(|v| v.param.as_str()).collect();
    assert!(params.contains(&"s"));
    assert!(params.contains(&"delta"));
}

#[tokio::test]
async fn tabulate_round_trips_table() {
    let c = client().await;
    let table = c
        .tabulate(&api::TabulateRequest {
            field: FieldSpec::iid_uniform(0.0, 1),
            n: 6,
            samples: 2,
            m: 1,
            grid_points: 7,
            margin: None,
        })
        .await
        .unwrap();
    assert_eq!(table.raw.len(), 7);
    assert!(table.is_convexified);
    for (e, r) in table.convexified.iter().zip(&table.raw) {
        assert!(*e <= r + 1e-12);
    }
}
