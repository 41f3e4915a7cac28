//! Minimal HTTP scorer speaking the `/score` protocol, for tests and demos.
//!
//! Modes: `constant[:v]`, `luma` (4 * mean luma + 1), `delay:<ms>` (luma
//! after a pause), `error500`, `malformed`, `flaky:<n>` (500 for the first
//! `n` requests, then luma). Prints `listening on http://ADDR` once bound.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use base64::Engine;
use clap::Parser;

use toolseq::raster::Raster;

#[derive(Parser)]
#[command(name = "mock-scorer")]
struct Args {
    #[arg(long, default_value_t = 0)]
    port: u16,
    #[arg(long, default_value = "luma")]
    mode: String,
}

#[derive(Debug, Clone, Copy)]
enum Mode {
    Constant(f64),
    Luma,
    Delay(u64),
    Error500,
    Malformed,
    Flaky(usize),
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    let (name, arg) = s.split_once(':').unwrap_or((s, ""));
    let num = |d: &str| if arg.is_empty() { d.parse() } else { arg.parse() };
    Ok(match name {
        "constant" => Mode::Constant(num("3.0").map_err(|e| format!("{e}"))?),
        "luma" => Mode::Luma,
        "delay" => Mode::Delay(num("2000").map_err(|e| format!("{e}"))? as u64),
        "error500" => Mode::Error500,
        "malformed" => Mode::Malformed,
        "flaky" => Mode::Flaky(num("1").map_err(|e| format!("{e}"))? as usize),
        other => return Err(format!("unknown mode {other:?}")),
    })
}

fn luma_score(body: &[u8]) -> Result<f64, String> {
    let v: serde_json::Value = serde_json::from_slice(body).map_err(|e| e.to_string())?;
    let b64 = v["image"].as_str().ok_or("missing image field")?;
    let png = base64::engine::general_purpose::STANDARD
        .decode(b64)
        .map_err(|e| e.to_string())?;
    let img = Raster::decode_png(&png).map_err(|e| e.to_string())?;
    let l = img.luma();
    Ok(4.0 * l.iter().sum::<f64>() / l.len() as f64 + 1.0)
}

fn respond(stream: &mut TcpStream, status: &str, body: &str) -> std::io::Result<()> {
    write!(
        stream,
        "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
        body.len()
    )?;
    stream.flush()
}

fn handle(mut stream: TcpStream, mode: Mode, count: &AtomicUsize) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let mut length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 || line == "\r\n" || line == "\n" {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.trim().eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; length];
    reader.read_exact(&mut body)?;
    if !request_line.starts_with("POST /score") {
        return respond(&mut stream, "404 Not Found", r#"{"error":"not found"}"#);
    }
    let n = count.fetch_add(1, Ordering::SeqCst);
    let luma = |stream: &mut TcpStream| match luma_score(&body) {
        Ok(s) => respond(stream, "200 OK", &format!(r#"{{"score":{s}}}"#)),
        Err(e) => respond(stream, "400 Bad Request", &serde_json::json!({ "error": e }).to_string()),
    };
    match mode {
        Mode::Constant(v) => respond(&mut stream, "200 OK", &format!(r#"{{"score":{v}}}"#)),
        Mode::Luma => luma(&mut stream),
        Mode::Delay(ms) => {
            std::thread::sleep(Duration::from_millis(ms));
            luma(&mut stream)
        }
        Mode::Error500 => respond(&mut stream, "500 Internal Server Error", r#"{"error":"induced"}"#),
        Mode::Malformed => respond(&mut stream, "200 OK", r#"{"score": "not a number""#),
        Mode::Flaky(k) if n < k => respond(&mut stream, "500 Internal Server Error", r#"{"error":"induced"}"#),
        Mode::Flaky(_) => luma(&mut stream),
    }
}

fn main() {
    let args = Args::parse();
    let mode = match parse_mode(&args.mode) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    };
    let listener = match TcpListener::bind(("127.0.0.1", args.port)) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: cannot bind port {}: {e}", args.port);
            std::process::exit(1);
        }
    };
    println!("listening on http://{}", listener.local_addr().expect("bound socket has an address"));
    std::io::stdout().flush().ok();
    let count = Arc::new(AtomicUsize::new(0));
    for stream in listener.incoming().flatten() {
        let count = Arc::clone(&count);
        std::thread::spawn(move || {
            if let Err(e) = handle(stream, mode, &count) {
                eprintln!("connection error: {e}");
            }
        });
    }
}
