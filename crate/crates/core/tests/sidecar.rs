use std::time::{Duration, Instant};

use debias_core::encoder::sidecar::SidecarOptions;
use debias_core::encoder::{
    EncoderHandle, EncoderKind, HashEncoder, SentenceEncoder, SidecarEncoder,
};
use debias_core::Error;

const BIN: &str = env!("CARGO_BIN_EXE_hash-sidecar");

fn argv(extra: &[&str]) -> Vec<String> {
    let mut v = vec![BIN.to_string(), "--dim".into(), "8".into()];
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn sentences(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| format!("sentence number {i} is here."))
        .collect()
}

fn connect(extra: &[&str], options: SidecarOptions) -> Result<SidecarEncoder, Error> {
    SidecarEncoder::connect_with(&argv(extra), options)
}

fn transport_raw(err: Error) -> (String, Option<String>) {
    match err {
        Error::Transport { message, raw } => (message, raw),
        other => panic!("expected a transport error, got {other:?}"),
    }
}

#[test]
fn handshake_records_name_and_dim() {
    let s = connect(&[], SidecarOptions::default()).unwrap();
    assert_eq!(s.name(), "hash-sidecar:8");
    assert_eq!(s.dim(), 8);
    assert_eq!(s.kind(), EncoderKind::External);
}

#[test]
fn vectors_match_the_in_process_encoder() {
    let s = connect(&[], SidecarOptions::default()).unwrap();
    let local = HashEncoder::new(8);
    let batch = sentences(5);
    for (remote, text) in s.encode(&batch).unwrap().iter().zip(&batch) {
        let want = local.encode_sentence(text);
        for (a, b) in remote.as_slice().iter().zip(want.as_slice()) {
            assert!((a - b).abs() <= 1e-6);
        }
    }
}

#[test]
fn batching_does_not_change_rows() {
    let small = connect(
        &[],
        SidecarOptions {
            batch_size: 3,
            ..Default::default()
        },
    )
    .unwrap();
    let large = connect(&[], SidecarOptions::default()).unwrap();
    let all = sentences(10);
    let whole = large.encode(&all).unwrap();
    let mut split = small.encode(&all[..4]).unwrap();
    split.extend(small.encode(&all[4..]).unwrap());
    assert_eq!(whole.len(), split.len());
    for (a, b) in whole.iter().zip(&split) {
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() <= 1e-6);
        }
    }
}

#[test]
fn handle_encodes_through_the_sidecar() {
    let h = EncoderHandle::new(Box::new(connect(&[], SidecarOptions::default()).unwrap()));
    let m = h.encode_batch(&["a b", "a b", "c"]).unwrap();
    assert_eq!(m.len(), 3);
    assert_eq!(m.row(0), m.row(1));
    assert!(h.encode_batch::<&str>(&[]).is_err());
}

#[test]
fn sequences_extension() {
    let s = connect(&[], SidecarOptions::default()).unwrap();
    let seqs = s
        .encode_sequences(&["one two three".to_string(), "four".to_string()])
        .unwrap();
    assert_eq!(seqs.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 1]);
    let want = HashEncoder::new(8).token_vector("two");
    for (a, b) in seqs[0][1].as_slice().iter().zip(want.as_slice()) {
        assert!((a - b).abs() <= 1e-6);
    }
}

#[test]
fn malformed_handshake_carries_the_raw_line() {
    let err = connect(&["--fault", "bad-hello"], SidecarOptions::default()).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    let (message, raw) = transport_raw(err);
    assert!(
        message.contains("handshake") || message.contains("malformed"),
        "{message}"
    );
    assert!(raw.unwrap().contains("many"));
}

#[test]
fn silent_sidecar_times_out() {
    let start = Instant::now();
    let err = connect(
        &["--fault", "silent"],
        SidecarOptions {
            timeout: Duration::from_millis(300),
            ..Default::default()
        },
    )
    .unwrap_err();
    assert!(start.elapsed() < Duration::from_secs(10));
    let (message, _) = transport_raw(err);
    assert!(message.contains("no response"), "{message}");
}

#[test]
fn garbage_response_is_reported_verbatim() {
    let s = connect(&["--fault", "garbage"], SidecarOptions::default()).unwrap();
    let (_, raw) = transport_raw(s.encode(&sentences(1)).unwrap_err());
    assert_eq!(raw.as_deref(), Some("not json"));
}

#[test]
fn mismatched_id_is_rejected() {
    let s = connect(&["--fault", "wrong-id"], SidecarOptions::default()).unwrap();
    let (message, raw) = transport_raw(s.encode(&sentences(1)).unwrap_err());
    assert!(message.contains("request 1"), "{message}");
    assert!(raw.unwrap().contains("\"id\":8"));
}

#[test]
fn short_vectors_are_rejected() {
    let s = connect(&["--fault", "short"], SidecarOptions::default()).unwrap();
    let (message, _) = transport_raw(s.encode(&sentences(2)).unwrap_err());
    assert!(message.contains("7 values"), "{message}");
}

#[test]
fn error_frames_surface_their_message() {
    let s = connect(&["--fault", "error"], SidecarOptions::default()).unwrap();
    let (message, raw) = transport_raw(s.encode(&sentences(1)).unwrap_err());
    assert!(message.contains("model exploded"));
    assert!(raw.unwrap().starts_with("{\"op\":\"error\""));
}

#[test]
fn empty_client_batch_skips_the_round_trip() {
    let s = connect(&[], SidecarOptions::default()).unwrap();
    assert!(s.encode(&[]).unwrap().is_empty());
}

#[test]
fn raw_protocol_exchange() {
    use std::io::{BufRead, BufReader, Write};
    use std::process::{Command, Stdio};

    let mut child = Command::new(BIN)
        .args(["--dim", "4"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    writeln!(stdin, r#"{{"op":"hello"}}"#).unwrap();
    writeln!(stdin, r#"{{"op":"encode","id":1,"sentences":[]}}"#).unwrap();
    writeln!(stdin, r#"{{"op":"encode","id":2,"sentences":["abc"]}}"#).unwrap();
    drop(stdin);
    let lines: Vec<String> = BufReader::new(child.stdout.take().unwrap())
        .lines()
        .map(Result::unwrap)
        .collect();
    child.wait().unwrap();
    assert_eq!(
        lines[0],
        r#"{"op":"hello","name":"hash-sidecar:4","dim":4}"#
    );
    assert_eq!(lines[1], r#"{"op":"error","id":1,"message":"empty batch"}"#);
    let v: serde_json::Value = serde_json::from_str(&lines[2]).unwrap();
    assert_eq!(v["op"], "result");
    assert_eq!(v["id"], 2);
    assert_eq!(v["embeddings"][0].as_array().unwrap().len(), 4);
}
