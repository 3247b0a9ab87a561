//! Reference sidecar serving the hash encoder over the stdio protocol.
//!
//! `hash-sidecar [--dim N] [--fault MODE]` where MODE is one of `bad-hello`,
//! `silent`, `garbage`, `wrong-id`, `short`, `error`.

use std::io::{self, BufRead, Write};

use debias_core::encoder::sidecar::{Request, Response};
use debias_core::encoder::HashEncoder;

fn main() {
    let mut dim = 16;
    let mut fault = String::new();
    let mut args = std::env::args().skip(1);
    while let Some(a) = args.next() {
        match a.as_str() {
            "--dim" => dim = args.next().and_then(|v| v.parse().ok()).expect("--dim N"),
            "--fault" => fault = args.next().expect("--fault MODE"),
            other => {
                eprintln!("unknown argument {other}");
                std::process::exit(2);
            }
        }
    }
    let encoder = HashEncoder::new(dim);
    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        let reply = match serde_json::from_str::<Request>(&line) {
            Ok(Request::Hello) => match fault.as_str() {
                "bad-hello" => Some("{\"op\":\"hello\",\"dim\":\"many\"}".to_string()),
                "silent" => None,
                _ => Some(to_line(&Response::Hello {
                    name: format!("hash-sidecar:{dim}"),
                    dim,
                })),
            },
            Ok(Request::Encode { id, sentences }) => Some(match fault.as_str() {
                "garbage" => "not json".to_string(),
                "wrong-id" => to_line(&Response::Result {
                    id: id + 7,
                    embeddings: Some(vec![]),
                    sequences: None,
                }),
                "error" => to_line(&Response::Error {
                    id: Some(id),
                    message: "model exploded".into(),
                }),
                _ if sentences.is_empty() => to_line(&Response::Error {
                    id: Some(id),
                    message: "empty batch".into(),
                }),
                "short" => to_line(&Response::Result {
                    id,
                    embeddings: Some(vec![
                        vec![0.0; dim.saturating_sub(1).max(1)];
                        sentences.len()
                    ]),
                    sequences: None,
                }),
                _ => {
                    let rows = sentences
                        .iter()
                        .map(|s| encoder.encode_sentence(s).into_inner())
                        .collect();
                    to_line(&Response::Result {
                        id,
                        embeddings: Some(rows),
                        sequences: None,
                    })
                }
            }),
            Ok(Request::EncodeSeq { id, sentences }) => {
                let seqs = sentences
                    .iter()
                    .map(|s| {
                        debias_core::encoder::tokenize(s)
                            .iter()
                            .map(|t| encoder.token_vector(t).into_inner())
                            .collect()
                    })
                    .collect();
                Some(to_line(&Response::Result {
                    id,
                    embeddings: None,
                    sequences: Some(seqs),
                }))
            }
            Err(e) => Some(to_line(&Response::Error {
                id: None,
                message: format!("bad request: {e}"),
            })),
        };
        if let Some(r) = reply {
            if writeln!(out, "{r}").and_then(|_| out.flush()).is_err() {
                break;
            }
        }
    }
}

fn to_line(r: &Response) -> String {
    serde_json::to_string(r).expect("responses serialize")
}
