//! Wire-protocol tests for the external NER and embedding clients against a
//! minimal local HTTP server.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use fairscreen::anonymizer::{
    anonymize_corpus, EntityLabel, EntitySpan, LabelSet, NerBackendConfig, NerClient,
};
use fairscreen::corpus::{generate_corpus, GeneratorConfig};
use fairscreen::embedder::EmbedClient;
use fairscreen::Error;

/// What the server does with one request.
#[derive(Clone)]
enum Reply {
    Json(String),
    Status(u16),
    SleepThenJson(Duration, String),
}

struct ServerHandle {
    endpoint: String,
    requests: Arc<AtomicU32>,
    bodies: Arc<Mutex<Vec<(String, String)>>>,
}

/// Spawn a tiny HTTP/1.1 server; request `i` gets `replies[min(i, len-1)]`.
fn spawn_server(replies: Vec<Reply>) -> ServerHandle {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind test server");
    let endpoint = format!("http://{}", listener.local_addr().unwrap());
    let requests = Arc::new(AtomicU32::new(0));
    let bodies: Arc<Mutex<Vec<(String, String)>>> = Arc::new(Mutex::new(Vec::new()));

    let requests_thread = requests.clone();
    let bodies_thread = bodies.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let idx = requests_thread.fetch_add(1, Ordering::SeqCst) as usize;
            let reply = replies[idx.min(replies.len() - 1)].clone();
            let bodies = bodies_thread.clone();
            std::thread::spawn(move || handle_connection(&mut stream, reply, bodies));
        }
    });

    ServerHandle {
        endpoint,
        requests,
        bodies,
    }
}

fn handle_connection(stream: &mut TcpStream, reply: Reply, bodies: Arc<Mutex<Vec<(String, String)>>>) {
    stream
        .set_read_timeout(Some(Duration::from_secs(5)))
        .unwrap();
    let mut buf = Vec::new();
    let mut chunk = [0u8; 1024];
    let header_end = loop {
        match stream.read(&mut chunk) {
            Ok(0) => return,
            Ok(n) => {
                buf.extend_from_slice(&chunk[..n]);
                if let Some(pos) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
                    break pos + 4;
                }
            }
            Err(_) => return,
        }
    };
    let head = String::from_utf8_lossy(&buf[..header_end]).to_string();
    let path = head
        .lines()
        .next()
        .and_then(|l| l.split_whitespace().nth(1))
        .unwrap_or("")
        .to_string();
    let content_length: usize = head
        .lines()
        .find_map(|l| {
            let (name, value) = l.split_once(':')?;
            name.trim()
                .eq_ignore_ascii_case("content-length")
                .then(|| value.trim().parse().ok())?
        })
        .unwrap_or(0);
    while buf.len() < header_end + content_length {
        match stream.read(&mut chunk) {
            Ok(0) => break,
            Ok(n) => buf.extend_from_slice(&chunk[..n]),
            Err(_) => return,
        }
    }
    let body = String::from_utf8_lossy(&buf[header_end..]).to_string();
    bodies.lock().unwrap().push((path, body));

    let (status, payload) = match reply {
        Reply::Json(json) => (200, json),
        Reply::Status(code) => (code, String::from("{}")),
        Reply::SleepThenJson(delay, json) => {
            std::thread::sleep(delay);
            (200, json)
        }
    };
    let response = format!(
        "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{payload}",
        payload.len()
    );
    let _ = stream.write_all(response.as_bytes());
}

fn client(endpoint: &str, timeout_secs: f64, retries: u32) -> NerClient {
    NerClient::new(&NerBackendConfig {
        endpoint: endpoint.to_string(),
        timeout_secs,
        retries,
        backend_name: "external".into(),
        max_concurrent: 4,
    })
    .unwrap()
}

#[test]
fn valid_entities_pass_through() {
    let server = spawn_server(vec![Reply::Json(
        r#"{"entities":[{"start":10,"end":16,"label":"LOC"}]}"#.into(),
    )]);
    let client = client(&server.endpoint, 5.0, 0);
    let text = "aaaaaaaaaabbbbbbcccc"; // 20 code points
    let spans = client.tag_text(text).unwrap();
    assert_eq!(spans, vec![EntitySpan::new(10, 16, EntityLabel::Loc)]);

    // The request went to /tag with a {"text": ...} body.
    let bodies = server.bodies.lock().unwrap();
    assert_eq!(bodies.len(), 1);
    assert_eq!(bodies[0].0, "/tag");
    let parsed: serde_json::Value = serde_json::from_str(&bodies[0].1).unwrap();
    assert_eq!(parsed["text"], text);
}

#[test]
fn unknown_labels_are_dropped_and_counted() {
    let server = spawn_server(vec![Reply::Json(
        r#"{"entities":[{"start":0,"end":4,"label":"ORG"},{"start":5,"end":9,"label":"PER"}]}"#
            .into(),
    )]);
    let client = client(&server.endpoint, 5.0, 0);
    let spans = client.tag_text("abcd efgh rest").unwrap();
    assert_eq!(spans, vec![EntitySpan::new(5, 9, EntityLabel::Per)]);
    assert_eq!(client.dropped_unknown(), 1);
}

#[test]
fn out_of_range_offsets_are_a_protocol_error() {
    let server = spawn_server(vec![Reply::Json(
        r#"{"entities":[{"start":10,"end":99,"label":"LOC"}]}"#.into(),
    )]);
    let client = client(&server.endpoint, 5.0, 0);
    let err = client.tag_text("aaaaaaaaaabbbbbbcccc").unwrap_err();
    match err {
        Error::Protocol { msg, .. } => assert!(msg.contains("99"), "{msg}"),
        other => panic!("expected protocol error, got {other}"),
    }
}

#[test]
fn non_json_body_is_a_protocol_error() {
    let server = spawn_server(vec![Reply::Json("this is not json".into())]);
    let client = client(&server.endpoint, 5.0, 2);
    let err = client.tag_text("hello world").unwrap_err();
    assert!(matches!(err, Error::Protocol { .. }), "{err}");
    // Protocol errors do not retry.
    assert_eq!(server.requests.load(Ordering::SeqCst), 1);
}

#[test]
fn non_200_responses_are_retried_then_succeed() {
    let server = spawn_server(vec![
        Reply::Status(500),
        Reply::Status(503),
        Reply::Json(r#"{"entities":[]}"#.into()),
    ]);
    let client = client(&server.endpoint, 5.0, 2);
    let spans = client.tag_text("nothing to see").unwrap();
    assert!(spans.is_empty());
    assert_eq!(server.requests.load(Ordering::SeqCst), 3);
}

#[test]
fn persistent_failures_become_backend_unavailable() {
    let server = spawn_server(vec![Reply::Status(500)]);
    let client = client(&server.endpoint, 5.0, 1);
    let err = client.tag_text("text").unwrap_err();
    match err {
        Error::BackendUnavailable { attempts, .. } => assert_eq!(attempts, 2),
        other => panic!("expected backend-unavailable, got {other}"),
    }
    assert_eq!(server.requests.load(Ordering::SeqCst), 2);
}

#[test]
fn timeouts_become_backend_unavailable() {
    let server = spawn_server(vec![Reply::SleepThenJson(
        Duration::from_millis(800),
        r#"{"entities":[]}"#.into(),
    )]);
    let client = client(&server.endpoint, 0.15, 0);
    let err = client.tag_text("slow").unwrap_err();
    assert!(matches!(err, Error::BackendUnavailable { .. }), "{err}");
}

#[test]
fn unreachable_endpoint_is_backend_unavailable() {
    // Nothing listens on this port.
    let client = client("http://127.0.0.1:9", 0.3, 0);
    let err = client.tag_text("text").unwrap_err();
    assert!(matches!(err, Error::BackendUnavailable { .. }), "{err}");
}

#[test]
fn corpus_anonymization_through_the_external_backend() {
    // Every biography gets its first four code points masked as PER.
    let server = spawn_server(vec![Reply::Json(
        r#"{"entities":[{"start":0,"end":4,"label":"PER"}]}"#.into(),
    )]);
    let corpus = generate_corpus(&GeneratorConfig::new(6, 2, 0.1)).unwrap();
    let client = client(&server.endpoint, 5.0, 1);
    let (masked, stats) = anonymize_corpus(&corpus, &client, LabelSet::ALL).unwrap();
    assert_eq!(masked.len(), corpus.len());
    for (i, resume) in masked.resumes.iter().enumerate() {
        assert!(resume.bio_raw.starts_with("[PER]"), "resume {i}: {}", resume.bio_raw);
        assert_eq!(resume.id, corpus.resumes[i].id);
    }
    assert_eq!(stats.masked_spans, corpus.len() as u64);
}

#[test]
fn embed_client_round_trip_and_dimension_check() {
    let server = spawn_server(vec![
        Reply::Json(r#"{"vector":[0.25,-0.5,0.125]}"#.into()),
        Reply::Json(r#"{"vector":[0.25,-0.5]}"#.into()),
    ]);
    let client = EmbedClient::new(&server.endpoint, 3, 5.0, 0).unwrap();
    let vector = client.embed_text("some text").unwrap();
    assert_eq!(vector.values(), &[0.25, -0.5, 0.125]);

    let err = client.embed_text("other text").unwrap_err();
    match err {
        Error::Protocol { msg, .. } => assert!(msg.contains("dimension"), "{msg}"),
        other => panic!("expected protocol error, got {other}"),
    }
    let bodies = server.bodies.lock().unwrap();
    assert_eq!(bodies[0].0, "/embed");
}
