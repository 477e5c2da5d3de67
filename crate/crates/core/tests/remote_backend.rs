//! Remote experts against an in-process HTTP stub.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use relay_core::experts::{Credentials, RemoteExpert, RetryPolicy};
use relay_core::mdp::{Answer, Question, State};
use relay_core::{BackendError, Error, ExpertPool, ExpertSpec};

struct Request {
    auth: Option<String>,
    body: serde_json::Value,
}

enum Reply {
    Echo,
    Status(u16),
    Garbage,
    Stall(Duration),
}

fn read_request(stream: &mut TcpStream) -> Request {
    let mut reader = BufReader::new(stream);
    let mut length = 0;
    let mut auth = None;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        let (name, value) = line.split_once(':').unwrap_or((line, ""));
        match name.to_ascii_lowercase().as_str() {
            "content-length" => length = value.trim().parse().unwrap(),
            "authorization" => auth = Some(value.trim().to_string()),
            _ => {}
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).unwrap();
    Request {
        auth,
        body: serde_json::from_slice(&body).unwrap(),
    }
}

fn respond(stream: &mut TcpStream, status: u16, body: &str) {
    let text = format!(
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    let _ = stream.write_all(text.as_bytes());
}

/// Serves one connection per entry in `replies`, reporting each request.
fn serve(replies: Vec<Reply>) -> (String, mpsc::Receiver<Request>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!(
        "http://{}/v1/chat/completions",
        listener.local_addr().unwrap()
    );
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for reply in replies {
            let (mut stream, _) = listener.accept().unwrap();
            let request = read_request(&mut stream);
            let prompt = request.body["messages"][0]["content"]
                .as_str()
                .unwrap_or("")
                .to_string();
            let _ = tx.send(request);
            match reply {
                Reply::Echo => {
                    let body = serde_json::json!({
                        "choices": [{"message": {"role": "assistant", "content": format!("echo: {prompt}")}}]
                    });
                    respond(&mut stream, 200, &body.to_string());
                }
                Reply::Status(code) => respond(&mut stream, code, "{\"error\":\"boom\"}"),
                Reply::Garbage => respond(&mut stream, 200, "{\"unexpected\": true}"),
                Reply::Stall(d) => thread::sleep(d),
            }
        }
    });
    (url, rx)
}

fn expert(url: &str, timeout_secs: f64) -> RemoteExpert {
    RemoteExpert {
        name: "stub".into(),
        endpoint: url.into(),
        model: "stub-model".into(),
        cost: 7.0,
        timeout_secs,
        max_tokens: 64,
        temperature: 0.0,
    }
}

fn pool(url: &str, timeout_secs: f64, retries: u32) -> ExpertPool {
    ExpertPool::new(vec![ExpertSpec::Remote(expert(url, timeout_secs))])
        .unwrap()
        .with_credentials(Credentials::bearer("secret-token"))
        .with_retry(RetryPolicy {
            retries,
            backoff: Duration::from_millis(1),
        })
}

fn state() -> State {
    State::initial(Arc::new(
        Question::new("q1", "What is two plus two?").unwrap(),
    ))
}

fn backend_error(err: Error) -> BackendError {
    match err {
        Error::Backend { source, .. } => source,
        other => panic!("expected backend error, got {other}"),
    }
}

#[test]
fn echo_round_trip_sends_prompt_and_token() {
    let (url, requests) = serve(vec![Reply::Echo]);
    let answer = pool(&url, 5.0, 0)
        .answer(
            0,
            &state(),
            "What is two plus two?",
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
    assert_eq!(answer.text, "echo: What is two plus two?");
    assert_eq!(answer.producer, 0);
    let request = requests.recv().unwrap();
    assert_eq!(request.auth.as_deref(), Some("Bearer secret-token"));
    assert_eq!(request.body["model"], "stub-model");
    assert_eq!(request.body["messages"][0]["role"], "user");
    assert_eq!(request.body["max_tokens"], 64);
}

#[test]
fn later_steps_send_the_transfer_prompt() {
    let (url, requests) = serve(vec![Reply::Echo]);
    let s = state().advance(Answer::new("four", 0));
    let prompt = relay_core::render_prompt(&s).unwrap();
    pool(&url, 5.0, 0)
        .answer(0, &s, &prompt, &mut ChaCha8Rng::seed_from_u64(0))
        .unwrap();
    let sent = requests.recv().unwrap();
    assert_eq!(sent.body["messages"][0]["content"], prompt.as_str());
    assert!(prompt.contains("\nfour\n"));
}

#[test]
fn server_error_is_reported_with_status() {
    let (url, _requests) = serve(vec![Reply::Status(500)]);
    let err = pool(&url, 5.0, 0)
        .answer(0, &state(), "p", &mut ChaCha8Rng::seed_from_u64(0))
        .unwrap_err();
    match backend_error(err) {
        BackendError::Status { status, expert, .. } => {
            assert_eq!(status, 500);
            assert_eq!(expert, "stub");
        }
        other => panic!("expected status error, got {other}"),
    }
}

#[test]
fn transient_failure_is_retried() {
    let (url, requests) = serve(vec![Reply::Status(503), Reply::Echo]);
    let answer = pool(&url, 5.0, 1)
        .answer(0, &state(), "again", &mut ChaCha8Rng::seed_from_u64(0))
        .unwrap();
    assert_eq!(answer.text, "echo: again");
    assert_eq!(requests.iter().take(2).count(), 2);
}

#[test]
fn client_error_is_not_retried() {
    let (url, _requests) = serve(vec![Reply::Status(400)]);
    // A second attempt would block on accept and never return.
    let err = pool(&url, 5.0, 3)
        .answer(0, &state(), "p", &mut ChaCha8Rng::seed_from_u64(0))
        .unwrap_err();
    assert!(matches!(
        backend_error(err),
        BackendError::Status { status: 400, .. }
    ));
}

#[test]
fn slow_server_times_out() {
    let (url, _requests) = serve(vec![Reply::Stall(Duration::from_secs(3))]);
    let err = pool(&url, 0.3, 0)
        .answer(0, &state(), "p", &mut ChaCha8Rng::seed_from_u64(0))
        .unwrap_err();
    assert!(matches!(backend_error(err), BackendError::Timeout));
}

#[test]
fn malformed_body_is_distinguished() {
    let (url, _requests) = serve(vec![Reply::Garbage]);
    let err = pool(&url, 5.0, 0)
        .answer(0, &state(), "p", &mut ChaCha8Rng::seed_from_u64(0))
        .unwrap_err();
    assert!(matches!(backend_error(err), BackendError::Malformed(_)));
}

#[test]
fn missing_credentials_fail_before_any_request() {
    let pool = ExpertPool::new(vec![ExpertSpec::Remote(expert(
        "http://127.0.0.1:9/x",
        1.0,
    ))])
    .unwrap()
    .with_credentials(Credentials::none());
    let err = pool
        .answer(0, &state(), "p", &mut ChaCha8Rng::seed_from_u64(0))
        .unwrap_err();
    assert!(matches!(
        backend_error(err),
        BackendError::MissingCredentials
    ));
}

#[test]
fn unreachable_endpoint_is_a_network_error() {
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let url = format!("http://127.0.0.1:{port}/v1/chat/completions");
    let err = pool(&url, 2.0, 0)
        .answer(0, &state(), "p", &mut ChaCha8Rng::seed_from_u64(0))
        .unwrap_err();
    assert!(matches!(backend_error(err), BackendError::Network(_)));
}
