//! The semi-quantum signaling game: exact witness, seeded round simulation,
//! tallies and the witness estimator.

use std::fmt::Write as _;
use std::io::{Read, Write};

use rand::{Rng, RngCore};
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bsm::{BsmModel, Outcome, PayoffTable};
use crate::channels::Channel;
use crate::error::{Error, Result};
use crate::qcore::{kron, prepared_state, StateLabel};
use crate::stream::{shards, Substreams};

/// Tolerance on `Σ_b P(b|x,y) = 1`.
pub const EPS_PROB: f64 = 1e-12;

/// Born-rule outcome probabilities `P(b|x,y)`, indexed by [`Outcome::index`].
pub fn outcome_distribution(
    channel: &Channel,
    bsm: &BsmModel,
    x: StateLabel,
    y: StateLabel,
) -> Result<[f64; 3]> {
    let stored = channel.apply(&prepared_state(x))?;
    let joint = kron(&stored, &prepared_state(y));
    let mut probs = [0.0; 3];
    for b in Outcome::ALL {
        let p = bsm.element(b).trace_product(&joint).re;
        if p < -EPS_PROB {
            return Err(Error::InvalidState(format!("negative probability {p} for {b}")));
        }
        probs[b.index()] = p.max(0.0);
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidState(format!("outcome probabilities sum to {total}")));
    }
    Ok(probs)
}

/// `P(b|x,y)` for all 16 challenge pairs.
#[derive(Debug, Clone, Copy)]
pub struct DistributionTable([[[f64; 3]; 4]; 4]);

impl DistributionTable {
    pub fn new(channel: &Channel, bsm: &BsmModel) -> Result<Self> {
        let mut table = [[[0.0; 3]; 4]; 4];
        for x in StateLabel::ALL {
            for y in StateLabel::ALL {
                table[x.index()][y.index()] = outcome_distribution(channel, bsm, x, y)?;
            }
        }
        Ok(DistributionTable(table))
    }

    pub fn get(&self, x: StateLabel, y: StateLabel) -> [f64; 3] {
        self.0[x.index()][y.index()]
    }

    /// `Σ_{x,y,b} P(b|x,y) w^b_{xy}`.
    pub fn witness(&self) -> f64 {
        let payoff = PayoffTable::standard();
        let mut acc = 0.0;
        for x in StateLabel::ALL {
            for y in StateLabel::ALL {
                let probs = self.get(x, y);
                for b in [Outcome::Plus, Outcome::Minus] {
                    acc += probs[b.index()] * payoff.get(b, x, y);
                }
            }
        }
        acc
    }
}

/// Infinite-statistics witness `⟨W⟩`.
pub fn exact_witness(channel: &Channel, bsm: &BsmModel) -> Result<f64> {
    Ok(DistributionTable::new(channel, bsm)?.witness())
}

/// Counts `N(b|x,y)` from a run of the game.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tally {
    counts: [[[u64; 3]; 4]; 4],
    pub rounds_attempted: u64,
    pub seed: u64,
}

impl Tally {
    pub fn empty(seed: u64) -> Self {
        Tally { counts: [[[0; 3]; 4]; 4], rounds_attempted: 0, seed }
    }

    pub fn count(&self, x: StateLabel, y: StateLabel, b: Outcome) -> u64 {
        self.counts[x.index()][y.index()][b.index()]
    }

    pub fn add(&mut self, x: StateLabel, y: StateLabel, b: Outcome, n: u64) {
        self.counts[x.index()][y.index()][b.index()] += n;
    }

    pub fn cell_total(&self, x: StateLabel, y: StateLabel) -> u64 {
        self.counts[x.index()][y.index()].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().flatten().sum()
    }

    /// Entrywise sum; `rounds_attempted` adds too.
    pub fn merge(&mut self, other: &Tally) {
        for (a, b) in self.counts.iter_mut().flatten().flatten().zip(other.counts.iter().flatten().flatten()) {
            *a += b;
        }
        self.rounds_attempted += other.rounds_attempted;
    }

    /// Nonzero cells in `(x, y, b)` order.
    pub fn nonzero(&self) -> impl Iterator<Item = (StateLabel, StateLabel, Outcome, u64)> + '_ {
        StateLabel::ALL.into_iter().flat_map(move |x| {
            StateLabel::ALL.into_iter().flat_map(move |y| {
                Outcome::ALL.into_iter().filter_map(move |b| {
                    let n = self.count(x, y, b);
                    (n > 0).then_some((x, y, b, n))
                })
            })
        })
    }

    /// Writes the `x,y,b,count` table.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "b", "count"]).map_err(csv_io)?;
        for (x, y, b, n) in self.nonzero() {
            w.write_record([x.as_str(), y.as_str(), b.as_str(), &n.to_string()]).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    /// Parses the `x,y,b,count` table. `rounds_attempted` is set to the
    /// total count and `seed` to zero; callers with a sidecar override both.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(input);
        let headers = reader.headers().map_err(|e| csv_parse(1, e))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["x", "y", "b", "count"] {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header x,y,b,count, got {:?}", headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let mut tally = Tally::empty(0);
        let mut seen = [[[false; 3]; 4]; 4];
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                csv_parse(line, e)
            })?;
            let line = record.position().map_or(0, |p| p.line());
            let bad = |message: String| Error::Parse { line, message };
            if record.len() != 4 {
                return Err(bad(format!("expected 4 fields, got {}", record.len())));
            }
            let x: StateLabel = record[0].parse().map_err(|e: Error| bad(e.to_string()))?;
            let y: StateLabel = record[1].parse().map_err(|e: Error| bad(e.to_string()))?;
            let b: Outcome = record[2].parse().map_err(|e: Error| bad(e.to_string()))?;
            let n: u64 = record[3]
                .parse()
                .map_err(|e| bad(format!("invalid count {:?}: {e}", &record[3])))?;
            let flag = &mut seen[x.index()][y.index()][b.index()];
            if *flag {
                return Err(bad(format!("duplicate row for ({x},{y},{b})")));
            }
            *flag = true;
            tally.add(x, y, b, n);
        }
        tally.rounds_attempted = tally.total();
        Ok(tally)
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn csv_parse(line: u64, e: csv::Error) -> Error {
    Error::Parse { line, message: e.to_string() }
}

/// Sidecar metadata written next to a tally file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TallyMeta {
    pub seed: u64,
    pub rounds: u64,
    pub channel: String,
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection_efficiency: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationOptions {
    pub workers: usize,
    /// Per-photon survival probability. A round is tallied only when both
    /// photons survive.
    pub detection_efficiency: Option<f64>,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        SimulationOptions { workers: 1, detection_efficiency: None }
    }
}

pub fn simulate_rounds(channel: &Channel, bsm: &BsmModel, n: u64, seed: u64) -> Result<Tally> {
    simulate_rounds_with(channel, bsm, n, seed, &SimulationOptions::default())
}

/// Plays `n` rounds with uniformly drawn challenges.
///
/// Round `i` uses substream `i` of `seed`: one `u32` picks `(x, y)` from its
/// low four bits, one `f64` samples `b`, and with a detection model two more
/// `f64`s decide photon survival.
pub fn simulate_rounds_with(
    channel: &Channel,
    bsm: &BsmModel,
    n: u64,
    seed: u64,
    opts: &SimulationOptions,
) -> Result<Tally> {
    if n == 0 {
        return Err(Error::invalid("number of rounds must be at least 1"));
    }
    if let Some(eta) = opts.detection_efficiency {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::invalid(format!("detection efficiency {eta} outside [0, 1]")));
        }
    }
    let table = DistributionTable::new(channel, bsm)?;
    let streams = Substreams::new(seed);
    let run_shard = |range: std::ops::Range<u64>| {
        let mut tally = Tally::empty(seed);
        tally.rounds_attempted = range.end - range.start;
        for round in range {
            let mut rng = streams.get(round);
            let challenge = rng.next_u32();
            let x = StateLabel::ALL[(challenge & 3) as usize];
            let y = StateLabel::ALL[((challenge >> 2) & 3) as usize];
            let u: f64 = rng.random();
            if let Some(eta) = opts.detection_efficiency {
                let first: f64 = rng.random();
                let second: f64 = rng.random();
                if first >= eta || second >= eta {
                    continue;
                }
            }
            tally.add(x, y, sample_outcome(&table.get(x, y), u), 1);
        }
        tally
    };

    let parts = shards(n, opts.workers);
    let partials: Vec<Tally> = if parts.len() > 1 {
        parts.into_par_iter().map(run_shard).collect()
    } else {
        parts.into_iter().map(run_shard).collect()
    };
    let mut total = Tally::empty(seed);
    for part in &partials {
        total.merge(part);
    }
    Ok(total)
}

fn sample_outcome(probs: &[f64; 3], u: f64) -> Outcome {
    if u < probs[0] {
        Outcome::Plus
    } else if u < probs[0] + probs[1] {
        Outcome::Minus
    } else {
        Outcome::Zero
    }
}

/// Estimated witness with one-sigma uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessResult {
    pub value: f64,
    pub std_error: f64,
    pub rounds_used: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorMethod {
    /// Per-cell multinomial variance propagated by the delta method. For a
    /// ratio estimator this coincides with treating counts as Poissonian.
    #[default]
    DeltaMethod,
    /// Multinomial parametric bootstrap.
    Bootstrap { resamples: u32, seed: u64 },
}

pub fn witness_estimate(tally: &Tally) -> Result<WitnessResult> {
    witness_estimate_with(tally, ErrorMethod::DeltaMethod)
}

/// `⟨W⟩ = Σ_{xy} Σ_b P̂(b|xy) w^b_{xy}` with each cell normalized over its
/// own `{+,-,0}` total.
pub fn witness_estimate_with(tally: &Tally, method: ErrorMethod) -> Result<WitnessResult> {
    let payoff = PayoffTable::standard();
    let mut cells = Vec::with_capacity(16);
    for x in StateLabel::ALL {
        for y in StateLabel::ALL {
            let n = tally.cell_total(x, y);
            if n == 0 {
                return Err(Error::InsufficientData(format!("no events in cell ({x},{y})")));
            }
            let freqs = Outcome::ALL.map(|b| tally.count(x, y, b) as f64 / n as f64);
            let weights = Outcome::ALL.map(|b| payoff.get(b, x, y));
            cells.push((n, freqs, weights));
        }
    }

    let mut value = 0.0;
    let mut variance = 0.0;
    for (n, freqs, weights) in &cells {
        let mean: f64 = freqs.iter().zip(weights).map(|(p, w)| p * w).sum();
        let second: f64 = freqs.iter().zip(weights).map(|(p, w)| p * w * w).sum();
        value += mean;
        variance += ((second - mean * mean) / *n as f64).max(0.0);
    }

    let std_error = match method {
        ErrorMethod::DeltaMethod => variance.sqrt(),
        ErrorMethod::Bootstrap { resamples, seed } => bootstrap_std(&cells, resamples, seed)?,
    };
    Ok(WitnessResult { value, std_error, rounds_used: tally.total() })
}

type Cell = (u64, [f64; 3], [f64; 3]);

fn bootstrap_std(cells: &[Cell], resamples: u32, seed: u64) -> Result<f64> {
    if resamples < 2 {
        return Err(Error::invalid("bootstrap needs at least two resamples"));
    }
    let streams = Substreams::new(seed);
    let values: Vec<f64> = (0..resamples)
        .map(|r| {
            let mut rng = streams.get(u64::from(r));
            cells
                .iter()
                .map(|(n, freqs, weights)| {
                    let counts = multinomial(&mut rng, *n, freqs);
                    counts.iter().zip(weights).map(|(&c, w)| c as f64 * w).sum::<f64>() / *n as f64
                })
                .sum()
        })
        .collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
    Ok(var.sqrt())
}

fn multinomial<R: Rng>(rng: &mut R, n: u64, probs: &[f64; 3]) -> [u64; 3] {
    let mut out = [0u64; 3];
    let mut remaining = n;
    let mut mass = 1.0;
    for i in 0..2 {
        if remaining == 0 || mass <= 0.0 {
            break;
        }
        let p = (probs[i] / mass).clamp(0.0, 1.0);
        let k = Binomial::new(remaining, p).expect("p in [0, 1]").sample(rng);
        out[i] = k;
        remaining -= k;
        mass -= probs[i];
    }
    out[2] = remaining;
    out
}

impl WitnessResult {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plain struct");
        let _ = writeln!(s);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bsm::bsm_povm;
    use crate::channels::{depolarizing, intercept_resend, QubitBasis};

    fn close3(a: [f64; 3], b: [f64; 3]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    fn z_intercept() -> Channel {
        let z = QubitBasis::new(StateLabel::H.ket(), StateLabel::V.ket()).unwrap();
        intercept_resend(&[z], &[1.0]).unwrap()
    }

    #[test]
    fn outcome_distribution_examples() {
        let id = Channel::identity();
        let ideal = BsmModel::ideal();
        let p = outcome_distribution(&id, &ideal, StateLabel::H, StateLabel::V).unwrap();
        assert!(close3(p, [0.0, 0.0, 1.0]));
        let p = outcome_distribution(&id, &ideal, StateLabel::D, StateLabel::D).unwrap();
        assert!(close3(p, [0.5, 0.0, 0.5]));
        let full = depolarizing(1.0).unwrap();
        for x in StateLabel::ALL {
            for y in StateLabel::ALL {
                let p = outcome_distribution(&full, &ideal, x, y).unwrap();
                assert!(close3(p, [0.25, 0.25, 0.5]));
            }
        }
    }

    #[test]
    fn exact_witness_examples() {
        let ideal = BsmModel::ideal();
        assert!((exact_witness(&Channel::identity(), &ideal).unwrap() - 1.0).abs() < 1e-12);
        assert!(exact_witness(&z_intercept(), &ideal).unwrap().abs() < 1e-12);
        for lambda in [0.0, 0.1, 0.25] {
            let w = exact_witness(&Channel::identity(), &bsm_povm(lambda).unwrap()).unwrap();
            assert!((w - (1.0 - 2.0 * lambda)).abs() < 1e-12);
        }
    }

    #[test]
    fn simulate_rejects_zero_rounds() {
        let err = simulate_rounds(&Channel::identity(), &BsmModel::ideal(), 0, 1);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn single_round_has_one_count() {
        for seed in [0, 1, 99] {
            let t = simulate_rounds(&Channel::identity(), &BsmModel::ideal(), 1, seed).unwrap();
            assert_eq!(t.total(), 1);
            assert_eq!(t.nonzero().count(), 1);
        }
    }

    #[test]
    fn simulation_is_deterministic_across_workers() {
        let ch = depolarizing(0.3).unwrap();
        let bsm = bsm_povm(0.1).unwrap();
        let single = simulate_rounds(&ch, &bsm, 5_000, 17).unwrap();
        let again = simulate_rounds(&ch, &bsm, 5_000, 17).unwrap();
        assert_eq!(single, again);
        for workers in [2, 3, 8] {
            let opts = SimulationOptions { workers, detection_efficiency: None };
            assert_eq!(simulate_rounds_with(&ch, &bsm, 5_000, 17, &opts).unwrap(), single);
        }
        assert_ne!(simulate_rounds(&ch, &bsm, 5_000, 18).unwrap(), single);
    }

    #[test]
    fn detection_efficiency_drops_rounds() {
        let opts = SimulationOptions { workers: 1, detection_efficiency: Some(0.5) };
        let t = simulate_rounds_with(&Channel::identity(), &BsmModel::ideal(), 40_000, 3, &opts).unwrap();
        assert_eq!(t.rounds_attempted, 40_000);
        let kept = t.total() as f64 / 40_000.0;
        assert!((kept - 0.25).abs() < 0.01, "{kept}");
        let r = witness_estimate(&t).unwrap();
        assert!((r.value - 1.0).abs() < 4.0 * r.std_error.max(1e-3));
    }

    #[test]
    fn identity_estimate_converges() {
        let t = simulate_rounds(&Channel::identity(), &BsmModel::ideal(), 10_000, 2024).unwrap();
        let r = witness_estimate(&t).unwrap();
        assert!((r.value - 1.0).abs() <= 3.0 * r.std_error, "{r:?}");
        assert_eq!(r.rounds_used, 10_000);
    }

    #[test]
    fn estimate_of_exact_counts_matches_oracle() {
        let ch = depolarizing(0.4).unwrap();
        let bsm = bsm_povm(0.05).unwrap();
        let table = DistributionTable::new(&ch, &bsm).unwrap();
        let scale = 1u64 << 40;
        let mut t = Tally::empty(0);
        for x in StateLabel::ALL {
            for y in StateLabel::ALL {
                for b in Outcome::ALL {
                    t.add(x, y, b, (table.get(x, y)[b.index()] * scale as f64).round() as u64);
                }
            }
        }
        let r = witness_estimate(&t).unwrap();
        assert!((r.value - table.witness()).abs() < 1e-9);
        assert!(r.std_error < 1e-5);
    }

    #[test]
    fn empty_cell_is_insufficient_data() {
        let mut t = Tally::empty(0);
        t.add(StateLabel::D, StateLabel::D, Outcome::Plus, 10);
        match witness_estimate(&t) {
            Err(Error::InsufficientData(msg)) => assert!(msg.contains("(H,H)"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bootstrap_agrees_with_delta_method() {
        let t = simulate_rounds(&depolarizing(0.2).unwrap(), &BsmModel::ideal(), 20_000, 5).unwrap();
        let delta = witness_estimate(&t).unwrap();
        let boot = witness_estimate_with(&t, ErrorMethod::Bootstrap { resamples: 1000, seed: 9 }).unwrap();
        assert_eq!(delta.value, boot.value);
        let ratio = boot.std_error / delta.std_error;
        assert!((0.85..1.15).contains(&ratio), "{ratio}");
    }

    #[test]
    fn tally_csv_round_trip() {
        let t = simulate_rounds(&depolarizing(0.5).unwrap(), &BsmModel::ideal(), 2_000, 11).unwrap();
        let text = t.to_csv_string();
        assert!(text.starts_with("x,y,b,count\n"));
        let back = Tally::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back.nonzero().collect::<Vec<_>>(), t.nonzero().collect::<Vec<_>>());
        assert_eq!(back.rounds_attempted, 2_000);
    }

    #[test]
    fn tally_parse_errors_report_lines() {
        let text = "x,y,b,count\nH,H,+,3\nH,Q,+,1\n";
        match Tally::read_csv(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let text = "x,y,b,count\nH,H,+,-3\n";
        assert!(matches!(Tally::read_csv(text.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let text = "a,b,c\n";
        assert!(matches!(Tally::read_csv(text.as_bytes()), Err(Error::Parse { line: 1, .. })));
        let text = "x,y,b,count\nH,H,+,1\nH,H,+,2\n";
        assert!(matches!(Tally::read_csv(text.as_bytes()), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn header_only_tally_is_insufficient() {
        let t = Tally::read_csv("x,y,b,count\n".as_bytes()).unwrap();
        assert!(matches!(witness_estimate(&t), Err(Error::InsufficientData(_))));
    }
}
