//! The HTTP embedding client against an in-process mock sidecar.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use newsgen::embed::{EmbedKind, EmbedRequest, EmbeddingProvider, HttpProvider, ProviderError, StubProvider};
use newsgen::ner::{visual_ner, CandidateIndex, EntityCategory};

#[derive(Clone, Copy)]
enum Behavior {
    Good,
    WrongCount,
    Unnormalized,
    ServerError,
}

struct Mock {
    url: String,
    embed_calls: Arc<AtomicUsize>,
}

/// Serves `/health` and `/embed` backed by a stub provider of dimension `dim`.
fn mock(dim: usize, max_batch: usize, behavior: Behavior) -> Mock {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let calls = Arc::new(AtomicUsize::new(0));
    let counter = calls.clone();
    thread::spawn(move || {
        let stub = StubProvider::new(dim, 5);
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            if reader.read_line(&mut request_line).is_err() {
                continue;
            }
            let mut len = 0usize;
            loop {
                let mut h = String::new();
                reader.read_line(&mut h).unwrap();
                if h == "\r\n" || h.is_empty() {
                    break;
                }
                if let Some(v) = h.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let (status, payload) = if request_line.starts_with("GET /health") {
                (200, format!(r#"{{"dim":{dim},"model":"mock","max_batch":{max_batch},"max_text_len":77}}"#))
            } else if request_line.starts_with("POST /embed") {
                counter.fetch_add(1, Ordering::SeqCst);
                let req: EmbedRequest = serde_json::from_slice(&body).unwrap();
                if req.items.len() > max_batch {
                    (413, "batch too large".to_string())
                } else {
                    let mut vectors = stub.embed(req.kind, &req.items).unwrap();
                    match behavior {
                        Behavior::WrongCount => {
                            vectors.pop();
                        }
                        Behavior::Unnormalized => vectors[0][0] += 1.0,
                        _ => {}
                    }
                    if matches!(behavior, Behavior::ServerError) {
                        (500, "boom".to_string())
                    } else {
                        (200, serde_json::json!({"dim": dim, "vectors": vectors}).to_string())
                    }
                }
            } else {
                (404, String::new())
            };
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                payload.len()
            );
        }
    });
    Mock { url, embed_calls: calls }
}

fn items(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("item {i}")).collect()
}

#[test]
fn handshake_and_batched_embedding_match_the_stub() {
    let m = mock(16, 3, Behavior::Good);
    let p = HttpProvider::connect(&m.url).unwrap();
    assert_eq!((p.dim(), p.text_limit(), p.health().model.as_str()), (16, 77, "mock"));
    let got = p.embed(EmbedKind::Text, &items(7)).unwrap();
    // 7 items in batches of at most 3
    assert_eq!(m.embed_calls.load(Ordering::SeqCst), 3);
    let want = StubProvider::new(16, 5).embed(EmbedKind::Text, &items(7)).unwrap();
    assert_eq!(got, want);
}

#[test]
fn dimension_mismatch_is_a_contract_error() {
    let m = mock(8, 4, Behavior::Good);
    assert!(HttpProvider::connect_expecting(&m.url, 8).is_ok());
    assert!(matches!(HttpProvider::connect_expecting(&m.url, 16), Err(ProviderError::Contract(_))));
}

#[test]
fn malformed_responses_are_rejected() {
    for behavior in [Behavior::WrongCount, Behavior::Unnormalized] {
        let m = mock(8, 4, behavior);
        let p = HttpProvider::connect(&m.url).unwrap();
        assert!(matches!(p.embed(EmbedKind::Image, &items(2)), Err(ProviderError::Contract(_))));
    }
    let m = mock(8, 4, Behavior::ServerError);
    let p = HttpProvider::connect(&m.url).unwrap();
    assert!(matches!(p.embed(EmbedKind::Text, &items(1)), Err(ProviderError::Status { status: 500, .. })));
}

#[test]
fn unreachable_service_is_a_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    assert!(matches!(HttpProvider::connect(&format!("http://127.0.0.1:{port}")), Err(ProviderError::Transport(_))));
}

#[test]
fn visual_ner_over_http_agrees_with_in_process_stub() {
    let m = mock(64, 8, Behavior::Good);
    let http = HttpProvider::connect(&m.url).unwrap();
    let stub = StubProvider::new(64, 5);
    let index = CandidateIndex::from_pairs(
        ["Ann Lee", "Varo", "Bex Group", "Tomo Summit", "Kai Dune"]
            .iter()
            .map(|s| (s.to_string(), EntityCategory::Person)),
    );
    let image = "synth://img/x/0#Ann Lee|Varo";
    assert_eq!(visual_ner(image, &index, &http, 3).unwrap(), visual_ner(image, &index, &stub, 3).unwrap());
}
