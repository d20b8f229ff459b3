//! Deterministic ego agent for exercising the harness over stdio or TCP.

use std::io::{self, BufRead, BufReader, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use occsphere_core::dynamics::{ControlLimits, ControlSignal};
use occsphere_core::harness::protocol::Message;
use occsphere_core::harness::{Agent, Script, ScriptedAgent, TraceParams};

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Zero,
    Trace,
    Random,
    Replay,
}

#[derive(Parser)]
#[command(name = "scripted-agent", version)]
struct Cli {
    #[arg(long, value_enum, default_value = "zero")]
    mode: Mode,
    /// Seed for `random` mode.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `accel yaw_rate` lines for `replay` mode.
    #[arg(long, required_if_eq("mode", "replay"))]
    controls: Option<PathBuf>,
    /// Cruise speed for `trace` mode, m/s.
    #[arg(long, default_value_t = TraceParams::default().cruise_speed)]
    cruise: f64,
    /// Answer this tick with an unparsable record.
    #[arg(long)]
    malformed_at: Option<u64>,
    /// Accept one harness connection on this address instead of using stdio. The bound
    /// address is printed on stdout first.
    #[arg(long)]
    listen: Option<String>,
}

fn parse_controls(text: &str) -> Result<Vec<ControlSignal>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(n, l)| {
            let v: Vec<f64> = l
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|_| format!("line {}: expected numbers", n + 1))?;
            match v[..] {
                [a, w] if a.is_finite() && w.is_finite() => Ok(ControlSignal::new(a, w)),
                _ => Err(format!("line {}: expected `accel yaw_rate`", n + 1)),
            }
        })
        .collect()
}

fn serve(agent: &mut ScriptedAgent, input: impl BufRead, mut output: impl Write) -> io::Result<()> {
    for line in input.lines() {
        let msg = match Message::decode(&line?) {
            Ok(m) => m,
            Err(e) => {
                eprintln!("scripted-agent: {e}");
                continue;
            }
        };
        if let Some(reply) = agent.handle(&msg) {
            writeln!(output, "{reply}")?;
            output.flush()?;
        }
        if matches!(msg, Message::End(_)) {
            break;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let script = match cli.mode {
        Mode::Zero => Script::Zero,
        Mode::Trace => Script::Trace(TraceParams {
            cruise_speed: cli.cruise,
            ..TraceParams::default()
        }),
        Mode::Random => Script::Random {
            seed: cli.seed,
            limits: ControlLimits::default(),
        },
        Mode::Replay => {
            let path = cli.controls.as_ref().expect("clap requires --controls");
            match std::fs::read_to_string(path)
                .map_err(|e| e.to_string())
                .and_then(|t| parse_controls(&t))
            {
                Ok(c) => Script::Replay(c),
                Err(e) => {
                    eprintln!("scripted-agent: {}: {e}", path.display());
                    return ExitCode::from(4);
                }
            }
        }
    };
    let mut agent = ScriptedAgent::new(script);
    agent.malformed_at = cli.malformed_at;

    let result = match &cli.listen {
        None => serve(&mut agent, io::stdin().lock(), io::stdout().lock()),
        Some(addr) => TcpListener::bind(addr).and_then(|l| {
            println!("{}", l.local_addr()?);
            io::stdout().flush()?;
            let (stream, _) = l.accept()?;
            serve(&mut agent, BufReader::new(stream.try_clone()?), stream)
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("scripted-agent: {e}");
            ExitCode::FAILURE
        }
    }
}
