mod common;

use common::*;
use lithoquery::geometry;
use lithoquery::geodata::FocusArea;
use lithoquery::project::LayerKind;
use lithoquery::workspace::{
    ContactRequest, DeriveOp, DeriveRequest, EvalSitesRequest, EvalTractsRequest, GridSearchRequest,
    IngestRequest, QueryRequest, ScoreFilter, Source, Truth,
};
use lithoquery::{Error, ErrorClass};

fn query(dataset_id: &str, text: &str, tau: f64) -> QueryRequest {
    QueryRequest {
        dataset_id: dataset_id.into(),
        query: Some(text.into()),
        tau: Some(tau),
        ..QueryRequest::default()
    }
}

#[test]
fn ingest_query_contact_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ws = workspace(dir.path());
    ws.store().ensure_project("p").unwrap();
    let ing = ws.ingest("p", &strip_ingest_request()).unwrap();
    assert_eq!(ing.datasets.len(), 2);
    assert_eq!(ing.report.ingested, 10);
    let ds = ws.store().dataset("p", &ing.dataset_id).unwrap();
    assert!(ds.crs().is_projected());
    for r in ds.records() {
        approx::assert_relative_eq!(geometry::area(&r.geometry), 1.0e7, max_relative = 1e-9);
    }

    let host = ws.query("p", &query(&ing.dataset_id, HOST_QUERY, 0.2)).unwrap();
    assert_eq!(host.selected_count, 2);
    assert_eq!(host.eligible_count, 10);
    assert_eq!(host.histogram.iter().map(|b| b.count).sum::<usize>(), 10);
    let src = ws.query("p", &query(&ing.dataset_id, SOURCE_QUERY, 0.2)).unwrap();

    let fc = ws.export(&host.layer_id, ScoreFilter::default()).unwrap();
    let liths: Vec<&str> = fc
        .features
        .iter()
        .map(|f| f.property("LITH").unwrap().as_str().unwrap())
        .collect();
    assert_eq!(liths, vec![STRIPS[3], STRIPS[6]]);
    assert_eq!(fc.features[0].property("rank").unwrap(), 1);
    approx::assert_relative_eq!(fc.features[0].property("score").unwrap().as_f64().unwrap(), 1.0, epsilon = 1e-9);

    let contact = ws
        .contact(
            "p",
            &ContactRequest {
                layer_ids: vec![host.layer_id.clone(), src.layer_id.clone()],
                r1: Some(300.0),
                r2: Some(300.0),
                ..ContactRequest::default()
            },
        )
        .unwrap();
    assert!(!contact.empty);
    let m = ws.layer(&contact.layer_id).unwrap();
    assert_eq!(m.kind, LayerKind::Contact);
    assert_eq!(m.input_layer_ids, vec![host.layer_id.clone(), src.layer_id.clone()]);
    // Two contacts (3|4 and 6|7), each a 600 m band grown by 300 m.
    assert!(contact.area > 2.0 * 1200.0 * 10_000.0);

    let metrics = ws
        .eval_tracts(&EvalTractsRequest {
            pred_layer_id: contact.layer_id.clone(),
            truth: Truth::LayerId(contact.layer_id.clone()),
        })
        .unwrap();
    approx::assert_relative_eq!(metrics.f1, 1.0, epsilon = 1e-6);
}

#[test]
fn deposit_model_mode_and_mode_errors() {
    let dir = tempfile::tempdir().unwrap();
    let ws = workspace(dir.path());
    ws.store().ensure_project("p").unwrap();
    let ing = ws.ingest("p", &strip_ingest_request()).unwrap();
    let out = ws
        .query(
            "p",
            &QueryRequest {
                dataset_id: ing.dataset_id.clone(),
                deposit_type: Some("tungsten skarn".into()),
                characteristic: Some("Rock types".into()),
                tau: Some(0.1),
                ..QueryRequest::default()
            },
        )
        .unwrap();
    assert!(out.query.starts_with("Pure and impure limestones"), "{}", out.query);
    let m = ws.layer(&out.layer_id).unwrap();
    assert_eq!(m.deposit_type.as_deref(), Some("tungsten skarn"));

    let both = QueryRequest {
        query: Some("granite".into()),
        deposit_type: Some("tungsten skarn".into()),
        characteristic: Some("Rock types".into()),
        ..query(&ing.dataset_id, "granite", 0.1)
    };
    assert_eq!(ws.query("p", &both).unwrap_err().class(), ErrorClass::Input);
    let unknown = QueryRequest {
        query: None,
        deposit_type: Some("tungsten skarn".into()),
        characteristic: Some("Favorite color".into()),
        ..query(&ing.dataset_id, "", 0.1)
    };
    assert_eq!(ws.query("p", &unknown).unwrap_err().class(), ErrorClass::NotFound);
    let bad_tau = query(&ing.dataset_id, "granite", 1.5);
    assert_eq!(ws.query("p", &bad_tau).unwrap_err().class(), ErrorClass::Input);
}

#[test]
fn layers_survive_restart_and_requests_replay() {
    let dir = tempfile::tempdir().unwrap();
    let (layer_id, dataset_id) = {
        let ws = workspace(dir.path());
        ws.store().ensure_project("p").unwrap();
        let ing = ws.ingest("p", &strip_ingest_request()).unwrap();
        let mut req = query(&ing.dataset_id, "granite", 0.3);
        req.request_id = Some("req-1".into());
        (ws.query("p", &req).unwrap().layer_id, ing.dataset_id)
    };
    let ws = workspace(dir.path());
    let m = ws.layer(&layer_id).unwrap();
    assert_eq!(m.feature_count, 3);
    assert_eq!(ws.histogram(&layer_id, Some(5)).unwrap().len(), 5);
    assert_eq!(ws.layers("p").unwrap().len(), 1);

    // Same request id with different content: the original result comes back.
    let mut replay = query(&dataset_id, "basalt", 0.1);
    replay.request_id = Some("req-1".into());
    assert_eq!(ws.query("p", &replay).unwrap().layer_id, layer_id);
    assert_eq!(ws.layers("p").unwrap().len(), 1);
}

#[test]
fn export_filter_and_reingest_areas() {
    let dir = tempfile::tempdir().unwrap();
    let ws = workspace(dir.path());
    ws.store().ensure_project("p").unwrap();
    let ing = ws.ingest("p", &strip_ingest_request()).unwrap();
    let layer = ws.query("p", &query(&ing.dataset_id, HOST_QUERY, 1.0)).unwrap();

    let above = ScoreFilter {
        score_min: Some(2.0),
        score_max: None,
    };
    assert!(ws.export(&layer.layer_id, above).unwrap().features.is_empty());
    let band = ScoreFilter {
        score_min: Some(0.7),
        score_max: Some(1.0),
    };
    assert_eq!(ws.export(&layer.layer_id, band).unwrap().features.len(), 2);

    let fc = ws.export(&layer.layer_id, ScoreFilter::default()).unwrap();
    assert_eq!(fc.features.len(), 10);
    let again = ws
        .ingest(
            "p",
            &IngestRequest {
                geojson: Some(Source::text(serde_json::to_string(&fc).unwrap())),
                config: strip_ingest_config(),
                project: true,
                ..IngestRequest::default()
            },
        )
        .unwrap();
    let a = ws.store().dataset("p", &ing.dataset_id).unwrap();
    let b = ws.store().dataset("p", &again.dataset_id).unwrap();
    for rb in b.records() {
        let link = rb.attribute("UNIT_LINK").unwrap();
        let ra = a.records().iter().find(|r| r.attribute("UNIT_LINK") == Some(link)).unwrap();
        let (x, y) = (geometry::area(&ra.geometry), geometry::area(&rb.geometry));
        assert!(((x - y) / x).abs() <= 1e-9, "{link}: {x} vs {y}");
    }
}

#[test]
fn focus_clip_and_derive() {
    let dir = tempfile::tempdir().unwrap();
    let ws = workspace(dir.path());
    ws.store().ensure_project("p").unwrap();
    let ing = ws.ingest("p", &strip_ingest_request()).unwrap();
    // West half of the strip world.
    let ring: Vec<geo::Coord<f64>> = wgs84_rect(-100.0, -100.0, 4990.0, 20_000.0)
        .into_iter()
        .map(|[x, y]| geo::Coord { x, y })
        .collect();
    let focus = FocusArea::new("west", ring).unwrap();
    ws.save_focus_area("p", &focus, None).unwrap();
    assert_eq!(ws.focus_areas("p").unwrap().len(), 1);

    let clipped = ws
        .derive(
            "p",
            &DeriveRequest {
                dataset_id: ing.dataset_id.clone(),
                op: DeriveOp::Clip {
                    focus_area: "west".into(),
                },
                request_id: None,
            },
        )
        .unwrap();
    assert_eq!(clipped.dataset.record_count, 5);

    let mut req = query(&ing.dataset_id, SOURCE_QUERY, 0.4);
    req.focus_area = Some("west".into());
    let out = ws.query("p", &req).unwrap();
    assert_eq!(out.eligible_count, 5);
    assert_eq!(out.dataset_id, clipped.dataset.dataset_id);

    let err = ws
        .derive(
            "p",
            &DeriveRequest {
                dataset_id: ing.dataset_id.clone(),
                op: DeriveOp::Project,
                request_id: None,
            },
        )
        .unwrap_err();
    assert!(matches!(err, Error::State(_)));
}

#[test]
fn site_and_grid_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let ws = workspace(dir.path());
    ws.store().ensure_project("p").unwrap();
    let ing = ws.ingest("p", &strip_ingest_request()).unwrap();
    let host = ws.query("p", &query(&ing.dataset_id, HOST_QUERY, 0.2)).unwrap();
    let src = ws.query("p", &query(&ing.dataset_id, SOURCE_QUERY, 0.2)).unwrap();

    let out = ws
        .eval_sites(&EvalSitesRequest {
            layer_ids: vec![host.layer_id.clone()],
            sites: Source::text(sites_csv(&[3, 6, 9])),
            buffers_m: vec![0.0, 100.0],
            trials: 10,
            seed: 7,
            oracle_mode: Default::default(),
        })
        .unwrap();
    assert_eq!(out.n_sites, 3);
    let c = &out.curves[0];
    // Cutoff 80 keeps the top 20% of the host ranking: strips 3 and 6.
    assert_eq!(c.method.at(80), Some(2.0 / 3.0));
    assert_eq!(c.method.at(100), Some(1.0 / 3.0));
    assert_eq!(c.baselines.oracle.at(30), Some(1.0));

    let contact = ws
        .contact(
            "p",
            &ContactRequest {
                layer_ids: vec![host.layer_id.clone(), src.layer_id.clone()],
                r1: Some(300.0),
                r2: Some(300.0),
                ..ContactRequest::default()
            },
        )
        .unwrap();
    let grid = ws
        .grid_search(&GridSearchRequest {
            layer_ids: vec![host.layer_id.clone(), src.layer_id.clone()],
            truth: Truth::LayerId(contact.layer_id.clone()),
            taus: vec![vec![0.1, 0.2], vec![0.1, 0.2]],
            r1: vec![100.0, 300.0],
            r2: vec![300.0],
            arc_segments: None,
        })
        .unwrap();
    let best = grid.best().unwrap();
    assert_eq!((best.taus.clone(), best.r1, best.r2), (vec![0.2, 0.2], 300.0, 300.0));
}
