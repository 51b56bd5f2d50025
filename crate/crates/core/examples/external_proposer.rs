//! Drives the search through the HTTP proposer protocol. A local thread
//! stands in for the external planner: it answers every request with a
//! bounded-add edit of the first parent on a rotating channel.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xcforge::evo::operators::{apply, OperatorKind};
use xcforge::evo::{run_search, HttpProposer, HttpSettings, ProblemSpec, ProposerRequest, ProposerResponse, SearchConfig};
use xcforge::forms::Channel;

fn answer(request: &ProposerRequest, n: usize) -> ProposerResponse {
    let parent = &request.parent_forms[0];
    let channel = Channel::ALL[n % 3];
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    let app = apply(OperatorKind::BoundedAdd, parent, None, channel, 0.1, &mut rng).expect("bounded add");
    ProposerResponse {
        plan_text: format!("request {n}: {} (saw {} lineage records)", app.plan, request.lineage_records.len()),
        form_document: serde_json::to_value(&app.form).expect("form json"),
        strategy: Some(format!("bounded_add:{}", channel.name())),
    }
}

fn serve(listener: TcpListener, requests: usize) {
    for n in 0..requests {
        let (stream, _) = listener.accept().expect("accept");
        let mut reader = BufReader::new(stream);
        let mut len = 0;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).expect("header");
            if line == "\r\n" || line.is_empty() {
                break;
            }
            if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                len = v.trim().parse().expect("length");
            }
        }
        let mut body = vec![0; len];
        reader.read_exact(&mut body).expect("body");
        let request: ProposerRequest = serde_json::from_slice(&body).expect("request json");
        let reply = serde_json::to_string(&answer(&request, n)).expect("reply json");
        let mut stream = reader.into_inner();
        write!(
            stream,
            "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
            reply.len()
        )
        .expect("write");
    }
}

fn main() -> xcforge::Result<()> {
    let budget = 6;
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
    let url = format!("http://{}/propose", listener.local_addr().expect("addr"));
    let server = std::thread::spawn(move || serve(listener, budget));

    let mut problem = ProblemSpec::default();
    problem.dataset.n_systems = 6;
    problem.dataset.n_reactions = 18;
    problem.n_proxies = 1;
    let (dataset, fixtures) = problem.build()?;
    let config = SearchConfig {
        budget,
        islands: 2,
        ..Default::default()
    };
    let mut proposer = HttpProposer::new(HttpSettings::new(url))?;
    let out = run_search(&config, &dataset, &fixtures, &mut proposer)?;
    server.join().expect("server thread");

    for c in out.candidates.iter().skip(config.islands) {
        println!("#{} R_evlv {:.4}  {}", c.id, c.penalized_score, c.plan_text);
    }
    Ok(())
}
