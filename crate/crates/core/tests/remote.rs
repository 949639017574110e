//! Client behaviour against the in-process mock services.

mod common;

use common::*;
use ganalyzer::latent_io::{write_store, LatentStore, LatentVector, Manifest};
use ganalyzer::remote::{
    classify_images, generate_images, MockOptions, MockServer, RemoteClient, RemoteScorer, ServiceEndpoint,
};
use ganalyzer::scoring::{label_store, LabelTable, Scorer};
use ganalyzer::ErrorClass;

fn mock(options: MockOptions) -> MockServer {
    MockServer::start(reference_world(), options, "127.0.0.1:0").unwrap()
}

fn endpoint(server: &MockServer, batch: usize, retries: u32) -> ServiceEndpoint {
    ServiceEndpoint {
        max_batch: batch,
        retries,
        timeout_secs: 10.0,
        ..ServiceEndpoint::new(server.url())
    }
}

fn vectors(n: u64) -> Vec<LatentVector> {
    gaussian(5, n, REF_DIM)
}

fn assert_matches_world(zs: &[LatentVector], probs: &[ganalyzer::scoring::AttributeProbabilities]) {
    let world = reference_world();
    assert_eq!(zs.len(), probs.len());
    for (z, p) in zs.iter().zip(probs) {
        assert_eq!(&world.score(z.as_slice()).unwrap(), p);
    }
}

#[test]
fn three_vectors_batch_two_makes_two_requests() {
    let server = mock(MockOptions::default());
    let ep = ServiceEndpoint { max_in_flight: 1, ..endpoint(&server, 2, 0) };
    let zs = vectors(3);
    let refs = generate_images(&ep, &zs).unwrap();
    assert_eq!(refs, ["img-0", "img-1", "img-2"]);
    assert_eq!(server.hits(), 2);
    let probs = classify_images(&ep, &refs).unwrap();
    assert_eq!(server.hits(), 4);
    assert_matches_world(&zs, &probs);
}

#[test]
fn failing_chunk_fails_whole_call_and_names_chunk() {
    let server = mock(MockOptions { fail_chunk: Some(1), ..MockOptions::default() });
    let ep = endpoint(&server, 2, 1);
    let err = generate_images(&ep, &vectors(3)).unwrap_err();
    assert_eq!(err.class(), ErrorClass::Remote);
    assert!(err.to_string().contains("chunk 1"), "{err}");
    // chunk 0 once, chunk 1 twice (first attempt plus one retry)
    assert_eq!(server.hits(), 3);
}

#[test]
fn empty_input_sends_nothing() {
    let server = mock(MockOptions::default());
    let ep = endpoint(&server, 2, 0);
    assert!(generate_images(&ep, &[]).unwrap().is_empty());
    assert!(classify_images(&ep, &[]).unwrap().is_empty());
    assert_eq!(server.hits(), 0);
}

#[test]
fn round_trip_preserves_order_under_concurrency() {
    let server = mock(MockOptions::default());
    let zs = vectors(50);
    for batch in [1, 7, 64] {
        let ep = ServiceEndpoint { max_in_flight: 8, ..endpoint(&server, batch, 0) };
        let refs = generate_images(&ep, &zs).unwrap();
        let probs = classify_images(&ep, &refs).unwrap();
        assert_matches_world(&zs, &probs);
    }
}

#[test]
fn malformed_classify_row_names_its_index() {
    let server = mock(MockOptions { malformed_row: Some(2), ..MockOptions::default() });
    let ep = ServiceEndpoint { max_in_flight: 1, ..endpoint(&server, 4, 0) };
    let zs = vectors(8);
    let refs = generate_images(&ep, &zs).unwrap();
    let err = classify_images(&ep, &refs).unwrap_err();
    assert_eq!(err.class(), ErrorClass::Remote);
    assert!(err.to_string().contains("index 2"), "{err}");
}

#[test]
fn retried_request_reuses_id_and_has_one_effect() {
    let server = mock(MockOptions { fail_first: 1, ..MockOptions::default() });
    let ep = ServiceEndpoint { max_in_flight: 1, ..endpoint(&server, 2, 2) };
    let zs = vectors(5);
    let refs = generate_images(&ep, &zs).unwrap();
    assert_eq!(refs.len(), 5);
    assert_eq!(server.hits(), 4);
    assert_eq!(server.effects(), 3);
    let ids = server.request_ids();
    assert_eq!(ids[0], ids[1]);
    assert_eq!(server.distinct_request_ids().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let server = mock(MockOptions::default());
    let client = RemoteClient::new(endpoint(&server, 4, 3)).unwrap();
    // unknown refs answer 404
    let err = client.classify_images(&["nope".to_string()]).unwrap_err();
    assert!(err.to_string().contains("404"), "{err}");
    assert_eq!(server.hits(), 1);
}

#[test]
fn unreachable_service_is_a_remote_error() {
    let ep = ServiceEndpoint {
        retries: 0,
        timeout_secs: 2.0,
        ..ServiceEndpoint::new("http://127.0.0.1:1")
    };
    let err = generate_images(&ep, &vectors(1)).unwrap_err();
    assert_eq!(err.class(), ErrorClass::Remote);
}

#[test]
fn score_errors_are_row_level() {
    let server = mock(MockOptions { malformed_row: Some(1), ..MockOptions::default() });
    let scorer = RemoteScorer::new(ServiceEndpoint { max_in_flight: 1, ..endpoint(&server, 3, 0) }, REF_DIM).unwrap();
    let zs = vectors(6);
    let refs: Vec<&LatentVector> = zs.iter().collect();
    let out = scorer.score_many(&refs);
    let failed: Vec<usize> = out.iter().enumerate().filter(|(_, r)| r.is_err()).map(|(i, _)| i).collect();
    assert_eq!(failed, [1, 4]);
    let world = reference_world();
    for i in [0, 2, 3, 5] {
        assert_eq!(out[i].as_ref().unwrap(), &world.score(zs[i].as_slice()).unwrap());
    }
}

#[test]
fn failed_score_chunk_fails_only_its_rows() {
    let server = mock(MockOptions { fail_chunk: Some(0), ..MockOptions::default() });
    let scorer = RemoteScorer::new(endpoint(&server, 2, 0), REF_DIM).unwrap();
    let zs = vectors(5);
    let refs: Vec<&LatentVector> = zs.iter().collect();
    let ok: Vec<bool> = scorer.score_many(&refs).iter().map(Result::is_ok).collect();
    assert_eq!(ok, [false, false, true, true, true]);
}

#[test]
fn remote_labels_equal_synthetic_labels() {
    let server = mock(MockOptions::default());
    let store = LatentStore::from_vectors(REF_DIM, vectors(300), Manifest::default()).unwrap();
    let remote = label_store(&store, &RemoteScorer::new(endpoint(&server, 16, 0), REF_DIM).unwrap()).unwrap();
    let local = label_store(&store, &reference_world()).unwrap();
    assert!(remote.failures.is_empty());
    assert_eq!(remote.table, local.table);
}

#[test]
fn cli_label_uses_endpoint_from_environment() {
    let server = mock(MockOptions::default());
    let dir = tempfile::tempdir().unwrap();
    let store_path = dir.path().join("z.bin");
    let out = dir.path().join("labels.jsonl");
    let zs = vectors(20);
    write_store(&store_path, &LatentStore::from_vectors(REF_DIM, zs.clone(), Manifest::default()).unwrap()).unwrap();
    // Only this test in the binary touches the variable.
    std::env::set_var(ganalyzer::cli::ENDPOINT_ENV, server.url());
    let code = ganalyzer::cli::run_from([
        "ganalyzer",
        "label",
        "--store",
        store_path.to_str().unwrap(),
        "--scorer",
        "remote",
        "--endpoint",
        "http://127.0.0.1:1",
        "--out",
        out.to_str().unwrap(),
    ]);
    std::env::remove_var(ganalyzer::cli::ENDPOINT_ENV);
    assert_eq!(code, 0);
    assert!(server.hits() > 0);
    let table = LabelTable::read(&out).unwrap();
    let world = reference_world();
    for (row, z) in table.rows().iter().zip(&zs) {
        assert_eq!(row.probs, world.score(z.as_slice()).unwrap());
    }
}
