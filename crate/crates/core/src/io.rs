//! CSV output of chains and latent summaries, and the snapshot format used
//! to store retained histories.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! value reads back bit for bit.

use std::fmt::Write as _;

use crate::data::{csv_error, csv_reader, record_line};
use crate::diag::LatentRow;
use crate::engine::ChainOutput;
use crate::error::{Error, Result};
use crate::history::{Event, PopulationHistory};
use crate::model::{Compartment, ModelSpec};
use crate::params::Params;

pub const DRAWS_HEADER: &str = "iteration,logpost,beta,gamma,mu,rho,phi,p_S,p_E,p_I,p_R,accept_rate";

/// One parsed row of a draws file; absent values are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawRow {
    pub iteration: usize,
    pub logpost: f64,
    /// `beta, gamma, mu, rho, phi, p_S, p_E, p_I, p_R`.
    pub values: [Option<f64>; 9],
    pub accept_rate: f64,
}

pub const DRAW_COLUMNS: [&str; 9] = ["beta", "gamma", "mu", "rho", "phi", "p_S", "p_E", "p_I", "p_R"];

fn na(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

pub fn draw_values(model: &ModelSpec, p: &Params) -> [Option<f64>; 9] {
    let prob = |c: Compartment| model.state_index(c).map(|i| p.p_init[i]);
    [
        Some(p.beta),
        if model.uses_gamma() { p.gamma } else { None },
        Some(p.mu),
        Some(p.rho),
        p.phi,
        prob(Compartment::S),
        prob(Compartment::E),
        prob(Compartment::I),
        prob(Compartment::R),
    ]
}

pub fn draws_csv(model: &ModelSpec, out: &ChainOutput) -> String {
    let mut s = String::with_capacity(out.draws.len() * 160);
    s.push_str(DRAWS_HEADER);
    s.push('\n');
    for (it, p) in out.draws.iter().enumerate() {
        let _ = write!(s, "{},{}", it, out.logpost[it]);
        for v in draw_values(model, p) {
            s.push(',');
            s.push_str(&na(v));
        }
        let _ = writeln!(s, ",{}", out.accept_rate[it]);
    }
    s
}

fn parse_field(field: &str, line: usize, what: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse { line, msg: format!("bad {what} '{}'", field.trim()) })
}

pub fn parse_draws_csv(text: &str) -> Result<Vec<DrawRow>> {
    let mut rdr = csv_reader(text, true, false);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.len() == 0 {
        return Err(Error::Parse { line: 1, msg: "empty file".into() });
    }
    if header.iter().collect::<Vec<_>>().join(",") != DRAWS_HEADER {
        return Err(Error::Parse { line: record_line(&header), msg: "unexpected header".into() });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let f = rec.map_err(csv_error)?;
        let line = record_line(&f);
        let iteration = f[0]
            .parse::<usize>()
            .map_err(|_| Error::Parse { line, msg: format!("bad iteration '{}'", &f[0]) })?;
        let mut values = [None; 9];
        for (k, v) in values.iter_mut().enumerate() {
            let s = &f[2 + k];
            *v = if s == "NA" { None } else { Some(parse_field(s, line, DRAW_COLUMNS[k])?) };
        }
        rows.push(DrawRow {
            iteration,
            logpost: parse_field(&f[1], line, "logpost")?,
            values,
            accept_rate: parse_field(&f[11], line, "accept_rate")?,
        });
    }
    Ok(rows)
}

/// Quantile column name, e.g. `0.025 -> q025`, `0.5 -> q50`.
pub fn quantile_label(q: f64) -> String {
    let pct = format!("{}", (q * 1000.0).round() / 10.0);
    let digits: String = pct.chars().filter(|c| *c != '.').collect();
    if pct.contains('.') {
        format!("q{:0>3}", digits)
    } else {
        format!("q{:0>2}", digits)
    }
}

pub fn latent_csv(model: &ModelSpec, rows: &[LatentRow], levels: &[f64]) -> String {
    let labels = model.labels();
    let mut s = String::from("time,state");
    for &q in levels {
        s.push(',');
        s.push_str(&quantile_label(q));
    }
    s.push('\n');
    for r in rows {
        let _ = write!(s, "{},{}", r.time, labels[r.state]);
        for q in &r.quantiles {
            let _ = write!(s, ",{q}");
        }
        s.push('\n');
    }
    s
}

/// Snapshot file: for each history a header `H,iteration,start,end,n_states`,
/// a line `I,<one digit per subject>` of initial states, then one
/// `E,time,subject,from,to` line per event.
pub fn snapshots_text(snapshots: &[(usize, PopulationHistory)]) -> String {
    let mut s = String::new();
    for (it, h) in snapshots {
        let (a, b) = h.window();
        let _ = writeln!(s, "H,{it},{a},{b},{}", h.n_states());
        s.push_str("I,");
        for st in h.initial_states() {
            s.push(char::from_digit(st as u32, 10).expect("fewer than ten states"));
        }
        s.push('\n');
        for e in h.events() {
            let _ = writeln!(s, "E,{},{},{},{}", e.time, e.subject, e.from, e.to);
        }
    }
    s
}

pub fn parse_snapshots(text: &str) -> Result<Vec<(usize, PopulationHistory)>> {
    struct Pending {
        iteration: usize,
        window: (f64, f64),
        n_states: usize,
        initial: Option<Vec<usize>>,
        events: Vec<Event>,
        line: usize,
    }
    fn finish(p: Pending) -> Result<(usize, PopulationHistory)> {
        let initial = p.initial.ok_or(Error::Parse { line: p.line, msg: "history without initial states".into() })?;
        let h = PopulationHistory::new(p.n_states, p.window, initial, p.events)
            .and_then(|h| h.check_consistent().map(|_| h))
            .map_err(|e| Error::Parse { line: p.line, msg: e.to_string() })?;
        Ok((p.iteration, h))
    }
    let mut out = Vec::new();
    let mut cur: Option<Pending> = None;
    let mut rdr = csv_reader(text, false, true);
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = record_line(&rec);
        let f: Vec<&str> = rec.iter().collect();
        let err = |msg: &str| Error::Parse { line, msg: msg.to_string() };
        match f[0] {
            "H" => {
                if f.len() != 5 {
                    return Err(err("history header needs 5 fields"));
                }
                if let Some(p) = cur.take() {
                    out.push(finish(p)?);
                }
                let n_states: usize = f[4].parse().map_err(|_| err("bad state count"))?;
                if !(2..=4).contains(&n_states) {
                    return Err(err("state count must be 2 to 4"));
                }
                cur = Some(Pending {
                    iteration: f[1].parse().map_err(|_| err("bad iteration"))?,
                    window: (parse_field(f[2], line, "start")?, parse_field(f[3], line, "end")?),
                    n_states,
                    initial: None,
                    events: Vec::new(),
                    line,
                });
            }
            "I" => {
                let p = cur.as_mut().ok_or_else(|| err("initial states before a header"))?;
                if f.len() != 2 || p.initial.is_some() {
                    return Err(err("malformed initial-state line"));
                }
                let states = f[1]
                    .chars()
                    .map(|c| c.to_digit(10).map(|d| d as usize).filter(|&d| d < p.n_states))
                    .collect::<Option<Vec<usize>>>()
                    .ok_or_else(|| err("bad initial state"))?;
                p.initial = Some(states);
            }
            "E" => {
                let p = cur.as_mut().ok_or_else(|| err("event before a header"))?;
                if f.len() != 5 {
                    return Err(err("event needs 5 fields"));
                }
                let small = |s: &str| s.parse::<u8>().ok().filter(|&v| (v as usize) < p.n_states);
                p.events.push(Event {
                    time: parse_field(f[1], line, "time")?,
                    subject: f[2].parse().map_err(|_| err("bad subject"))?,
                    from: small(f[3]).ok_or_else(|| err("bad source state"))?,
                    to: small(f[4]).ok_or_else(|| err("bad target state"))?,
                });
            }
            other => return Err(err(&format!("unknown record type '{other}'"))),
        }
    }
    if let Some(p) = cur {
        out.push(finish(p)?);
    }
    Ok(out)
}

/// True compartment counts just after every event, as CSV with one column
/// per state.
pub fn trajectory_csv(model: &ModelSpec, start: f64, initial: &[usize], events: &[crate::history::LumpedEvent]) -> String {
    let mut s = String::from("time");
    for l in model.labels() {
        s.push(',');
        s.push_str(l);
    }
    s.push('\n');
    for (t, c) in crate::sim::count_trajectory(initial, start, events) {
        let _ = write!(s, "{t}");
        for v in c {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}
