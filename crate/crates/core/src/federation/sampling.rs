//! Pre-generated per-round client selections, shared between runs so that
//! compared algorithms see the same participants.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index;

use super::config::clients_per_round;
use crate::error::{Error, Result};
use crate::rng::{substream, tag};

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingList {
    pub clients: usize,
    pub rate: f64,
    pub seed: u64,
    /// Sorted client ids, one list per round.
    pub rounds: Vec<Vec<usize>>,
}

impl SamplingList {
    pub fn generate(clients: usize, rounds: usize, rate: f64, seed: u64) -> Result<Self> {
        if clients == 0 {
            return Err(Error::config("clients", "must be >= 1"));
        }
        if !(rate > 0.0 && rate <= 1.0) || rate * clients as f64 + 1e-9 < 1.0 {
            return Err(Error::config("sampling_rate", format!("rate {rate} selects no client out of {clients}")));
        }
        let m = clients_per_round(clients, rate);
        let rounds = (0..rounds)
            .map(|t| {
                let mut rng = substream(seed, &[tag::SAMPLING, t as u64]);
                let mut ids = index::sample(&mut rng, clients, m).into_vec();
                ids.sort_unstable();
                ids
            })
            .collect();
        Ok(Self { clients, rate, seed, rounds })
    }

    pub fn num_rounds(&self) -> usize {
        self.rounds.len()
    }

    pub fn round(&self, t: usize) -> &[usize] {
        &self.rounds[t]
    }

    /// Header `K=<K> T=<T> rate=<r> seed=<s>` then one comma-separated line per round.
    pub fn to_text(&self) -> String {
        let mut out = format!("K={} T={} rate={} seed={}\n", self.clients, self.rounds.len(), self.rate, self.seed);
        for r in &self.rounds {
            let line: Vec<String> = r.iter().map(usize::to_string).collect();
            writeln!(out, "{}", line.join(",")).expect("string write");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::format(0, "empty sampling list"))?;
        let mut fields = [None, None, None, None];
        for tok in header.split_whitespace() {
            let (k, v) = tok.split_once('=').ok_or_else(|| Error::format(0, format!("bad header token `{tok}`")))?;
            let slot = match k {
                "K" => 0,
                "T" => 1,
                "rate" => 2,
                "seed" => 3,
                _ => return Err(Error::format(0, format!("unknown header field `{k}`"))),
            };
            fields[slot] = Some(v);
        }
        let get = |i: usize, name: &str| fields[i].ok_or_else(|| Error::format(0, format!("header lacks {name}")));
        let bad = |name: &str| Error::format(0, format!("unparsable {name}"));
        let clients: usize = get(0, "K")?.parse().map_err(|_| bad("K"))?;
        let t: usize = get(1, "T")?.parse().map_err(|_| bad("T"))?;
        let rate: f64 = get(2, "rate")?.parse().map_err(|_| bad("rate"))?;
        let seed: u64 = get(3, "seed")?.parse().map_err(|_| bad("seed"))?;

        let mut offset = header.len() as u64 + 1;
        let mut rounds = Vec::with_capacity(t);
        for line in lines {
            let ids = line
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::format(offset, format!("round {}: {e}", rounds.len())))?;
            let mut sorted = ids.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != ids.len() || ids.iter().any(|&i| i >= clients) {
                return Err(Error::format(
                    offset,
                    format!("round {}: ids must be distinct and < {clients}", rounds.len()),
                ));
            }
            rounds.push(ids);
            offset += line.len() as u64 + 1;
        }
        if rounds.len() != t {
            return Err(Error::format(offset, format!("header says {t} rounds, found {}", rounds.len())));
        }
        Ok(Self { clients, rate, seed, rounds })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}
