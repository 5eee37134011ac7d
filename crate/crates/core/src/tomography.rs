//! Single-qubit process tomography by linear inversion, and the faked-state
//! adversary that passes it while storing nothing quantum.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bsm::bsm_povm;
use crate::channels::{intercept_resend, project_psd, Channel, ChiFile, QubitBasis};
use crate::error::{Error, Result};
use crate::game::{exact_witness, simulate_rounds_with, witness_estimate, SimulationOptions, WitnessResult};
use crate::qcore::{kron, prepared_state, sigma_x, sigma_y, sigma_z, BellLabel, CMatrix, StateLabel, C64, I, ONE};
use crate::stream::{shards, Substreams};

/// Pauli measurement basis chosen by the verifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PauliBasis {
    X,
    Y,
    Z,
}

impl PauliBasis {
    pub const ALL: [PauliBasis; 3] = [PauliBasis::X, PauliBasis::Y, PauliBasis::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn observable(self) -> CMatrix {
        match self {
            PauliBasis::X => sigma_x(),
            PauliBasis::Y => sigma_y(),
            PauliBasis::Z => sigma_z(),
        }
    }

    /// Eigenbasis with the +1 eigenvector first.
    pub fn qubit_basis(self) -> QubitBasis {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let (plus, minus) = match self {
            PauliBasis::X => ([h, h].map(re), [re(h), re(-h)]),
            PauliBasis::Y => ([re(h), C64::new(0.0, h)], [re(h), C64::new(0.0, -h)]),
            PauliBasis::Z => ([ONE, re(0.0)], [re(0.0), ONE]),
        };
        QubitBasis::new(CMatrix::ket(&plus), CMatrix::ket(&minus)).expect("Pauli eigenbasis")
    }

    /// Probability of the +1 outcome on `rho`.
    pub fn plus_probability(self, rho: &CMatrix) -> f64 {
        let p = self.qubit_basis().projectors()[0].trace_product(rho).re;
        p.clamp(0.0, 1.0)
    }
}

fn re(v: f64) -> C64 {
    C64::new(v, 0.0)
}

impl fmt::Display for PauliBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PauliBasis::X => "X",
            PauliBasis::Y => "Y",
            PauliBasis::Z => "Z",
        })
    }
}

impl FromStr for PauliBasis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "X" | "x" => Ok(PauliBasis::X),
            "Y" | "y" => Ok(PauliBasis::Y),
            "Z" | "z" => Ok(PauliBasis::Z),
            other => Err(Error::invalid(format!("unknown basis {other:?}; expected X, Y or Z"))),
        }
    }
}

/// Counts for one `(input, basis)` setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettingCounts {
    pub input: StateLabel,
    pub basis: PauliBasis,
    pub plus: u64,
    pub minus: u64,
}

impl SettingCounts {
    pub fn recorded(&self) -> u64 {
        self.plus + self.minus
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomographyRecord {
    pub shots_per_setting: u64,
    pub seed: u64,
    pub settings: Vec<SettingCounts>,
}

impl TomographyRecord {
    pub fn setting(&self, input: StateLabel, basis: PauliBasis) -> Option<&SettingCounts> {
        self.settings.iter().find(|s| s.input == input && s.basis == basis)
    }

    /// Fraction of shots that produced an output.
    pub fn apparent_efficiency(&self) -> f64 {
        let recorded: u64 = self.settings.iter().map(SettingCounts::recorded).sum();
        recorded as f64 / (self.shots_per_setting * self.settings.len() as u64) as f64
    }
}

/// Setting `s` covers input `StateLabel::ALL[s / 3]` measured in `PauliBasis::ALL[s % 3]`.
fn setting_labels(s: usize) -> (StateLabel, PauliBasis) {
    (StateLabel::ALL[s / 3], PauliBasis::ALL[s % 3])
}

/// Runs the 12 settings; `respond` returns `Some(plus)` or `None` for no output.
/// Shot `k` of setting `s` draws from substream `s * shots + k`.
fn collect_record<F>(shots: u64, seed: u64, workers: usize, respond: F) -> Result<TomographyRecord>
where
    F: Fn(usize, &mut ChaCha8Rng) -> Option<bool> + Sync,
{
    if shots == 0 {
        return Err(Error::invalid("shots must be at least 1"));
    }
    let streams = Substreams::new(seed);
    let total = 12 * shots;
    let run = |range: std::ops::Range<u64>| {
        let mut counts = [[0u64; 2]; 12];
        for idx in range {
            let s = (idx / shots) as usize;
            let mut rng = streams.get(idx);
            match respond(s, &mut rng) {
                Some(true) => counts[s][0] += 1,
                Some(false) => counts[s][1] += 1,
                None => {}
            }
        }
        counts
    };
    let parts = shards(total, workers);
    let partials: Vec<[[u64; 2]; 12]> = if parts.len() > 1 {
        parts.into_par_iter().map(run).collect()
    } else {
        parts.into_iter().map(run).collect()
    };
    let mut counts = [[0u64; 2]; 12];
    for part in &partials {
        for (acc, c) in counts.iter_mut().zip(part) {
            acc[0] += c[0];
            acc[1] += c[1];
        }
    }
    let settings = counts
        .iter()
        .enumerate()
        .map(|(s, c)| {
            let (input, basis) = setting_labels(s);
            SettingCounts { input, basis, plus: c[0], minus: c[1] }
        })
        .collect();
    Ok(TomographyRecord { shots_per_setting: shots, seed, settings })
}

pub fn run_tomography(channel: &Channel, shots: u64, seed: u64) -> Result<TomographyRecord> {
    run_tomography_with(channel, shots, seed, 1)
}

/// Sends each preparation through `channel` and measures it in each Pauli basis.
pub fn run_tomography_with(channel: &Channel, shots: u64, seed: u64, workers: usize) -> Result<TomographyRecord> {
    let mut p_plus = [0.0; 12];
    for (s, slot) in p_plus.iter_mut().enumerate() {
        let (input, basis) = setting_labels(s);
        *slot = basis.plus_probability(&channel.apply(&prepared_state(input))?);
    }
    collect_record(shots, seed, workers, |s, rng| Some(rng.random::<f64>() < p_plus[s]))
}

/// When the adversary learns the verifier's measurement basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BasisLeak {
    /// Basis revealed before the adversary measures.
    Before,
    /// Basis revealed only at readout; the adversary guesses.
    #[default]
    After,
}

impl FromStr for BasisLeak {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "before" => Ok(BasisLeak::Before),
            "after" => Ok(BasisLeak::After),
            other => Err(Error::invalid(format!("unknown leak mode {other:?}; expected before or after"))),
        }
    }
}

impl fmt::Display for BasisLeak {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BasisLeak::Before => "before",
            BasisLeak::After => "after",
        })
    }
}

/// Measures the incoming photon at once, then controls the verifier's
/// detector: it replays its result when its basis matched the verifier's and
/// suppresses the output otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FakedStateAdversary {
    pub leak: BasisLeak,
}

impl FakedStateAdversary {
    pub fn new(leak: BasisLeak) -> Self {
        FakedStateAdversary { leak }
    }

    /// One round against a verifier measuring `input` in `verifier_basis`.
    pub fn respond<R: Rng>(&self, input: StateLabel, verifier_basis: PauliBasis, rng: &mut R) -> Option<bool> {
        let own_basis = match self.leak {
            BasisLeak::Before => verifier_basis,
            BasisLeak::After => PauliBasis::ALL[rng.random_range(0..3usize)],
        };
        let result = rng.random::<f64>() < own_basis.plus_probability(&prepared_state(input));
        (own_basis == verifier_basis).then_some(result)
    }

    /// The measure-and-prepare map the strategy induces on a stored qubit:
    /// equal-weight intercept-resend over the X, Y and Z bases.
    pub fn induced_channel(&self) -> Channel {
        let bases: Vec<QubitBasis> = PauliBasis::ALL.iter().map(|b| b.qubit_basis()).collect();
        intercept_resend(&bases, &[1.0 / 3.0; 3])
            .expect("Pauli bases with equal weights")
            .with_name("intercept-resend(X+Y+Z)")
    }
}

pub fn run_tomography_against(adversary: &FakedStateAdversary, shots: u64, seed: u64, workers: usize) -> Result<TomographyRecord> {
    collect_record(shots, seed, workers, |s, rng| {
        let (input, basis) = setting_labels(s);
        adversary.respond(input, basis, rng)
    })
}

/// Bloch vectors of the channel outputs for inputs `H, V, D, R`.
pub type OutputBloch = [[f64; 3]; 4];

pub fn bloch_from_record(rec: &TomographyRecord) -> Result<OutputBloch> {
    let mut bloch = [[0.0; 3]; 4];
    for input in StateLabel::ALL {
        for basis in PauliBasis::ALL {
            let counts = rec
                .setting(input, basis)
                .filter(|c| c.recorded() > 0)
                .ok_or_else(|| Error::InsufficientData(format!("no outcomes for input {input}, basis {basis}")))?;
            let n = counts.recorded() as f64;
            bloch[input.index()][basis.index()] = (counts.plus as f64 - counts.minus as f64) / n;
        }
    }
    Ok(bloch)
}

/// Noise-free Bloch vectors for a known channel.
pub fn exact_bloch(channel: &Channel) -> Result<OutputBloch> {
    let mut bloch = [[0.0; 3]; 4];
    for input in StateLabel::ALL {
        let out = channel.apply(&prepared_state(input))?;
        for basis in PauliBasis::ALL {
            bloch[input.index()][basis.index()] = out.trace_product(&basis.observable()).re;
        }
    }
    Ok(bloch)
}

pub fn reconstruct_chi(rec: &TomographyRecord) -> Result<CMatrix> {
    Ok(chi_from_bloch(&bloch_from_record(rec)?))
}

/// Linear inversion: output states → action on `|i⟩⟨j|` → Choi state → χ.
pub fn chi_from_bloch(bloch: &OutputBloch) -> CMatrix {
    let outputs: Vec<CMatrix> = bloch
        .iter()
        .map(|r| {
            let mut rho = CMatrix::identity(2);
            for (basis, &component) in PauliBasis::ALL.iter().zip(r) {
                rho = &rho + &basis.observable().scale_real(component);
            }
            rho.scale_real(0.5)
        })
        .collect();
    let [h, v, d, r] = [&outputs[0], &outputs[1], &outputs[2], &outputs[3]];
    // |0⟩⟨1| = |D⟩⟨D| + i|R⟩⟨R| - (1+i)/2 (|H⟩⟨H| + |V⟩⟨V|)
    let off = &(d + &r.scale(I)) - &(h + v).scale(C64::new(0.5, 0.5));
    let images = [[h.clone(), off.clone()], [off.adjoint(), v.clone()]];

    let mut choi = CMatrix::zeros(4, 4);
    for a in 0..2 {
        for b in 0..2 {
            let mut unit = CMatrix::zeros(2, 2);
            unit[(a, b)] = ONE;
            choi = &choi + &kron(&images[a][b], &unit).scale_real(0.5);
        }
    }

    let phi = BellLabel::PhiPlus.ket();
    let id = CMatrix::identity(2);
    let vectors = crate::channels::chi_basis().map(|e| &kron(&e, &id) * &phi);
    let mut chi = CMatrix::zeros(4, 4);
    for m in 0..4 {
        for n in 0..4 {
            chi[(m, n)] = vectors[m].inner(&(&choi * &vectors[n]));
        }
    }
    chi
}

/// Overlap of a (trace-normalized) process matrix with the identity process.
pub fn process_fidelity(chi: &CMatrix) -> f64 {
    chi[(0, 0)].re / chi.trace().re
}

#[derive(Debug, Clone, Serialize)]
pub struct AttackReport {
    pub leak: BasisLeak,
    pub shots_per_setting: u64,
    pub rounds: u64,
    pub seed: u64,
    /// Process fidelity of the raw linear-inversion estimate.
    pub reported_fidelity: f64,
    /// Process fidelity after projection onto physical process matrices.
    pub reported_fidelity_projected: f64,
    pub apparent_efficiency: f64,
    pub mdi_channel: String,
    pub mdi_lambda: f64,
    pub mdi_exact_witness: f64,
    pub mdi_witness: WitnessResult,
    pub chi_raw: ChiFile,
    pub chi_projected: ChiFile,
    pub note: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackOptions {
    pub leak: BasisLeak,
    pub lambda: f64,
    pub workers: usize,
}

impl Default for AttackOptions {
    fn default() -> Self {
        AttackOptions { leak: BasisLeak::After, lambda: 0.0, workers: 1 }
    }
}

/// Runs the adversary through tomography and, via its induced channel,
/// through the MDI game. Both legs use `seed`.
pub fn run_attack_comparison(shots: u64, rounds: u64, seed: u64, opts: &AttackOptions) -> Result<AttackReport> {
    if rounds == 0 {
        return Err(Error::invalid("rounds must be at least 1"));
    }
    let adversary = FakedStateAdversary::new(opts.leak);
    let record = run_tomography_against(&adversary, shots, seed, opts.workers)?;
    let chi = reconstruct_chi(&record)?;
    let projected = project_psd(&chi)?;

    let channel = adversary.induced_channel();
    let bsm = bsm_povm(opts.lambda)?;
    let sim = SimulationOptions { workers: opts.workers, detection_efficiency: None };
    let tally = simulate_rounds_with(&channel, &bsm, rounds, seed, &sim)?;

    Ok(AttackReport {
        leak: opts.leak,
        shots_per_setting: shots,
        rounds,
        seed,
        reported_fidelity: process_fidelity(&chi),
        reported_fidelity_projected: process_fidelity(&projected),
        apparent_efficiency: record.apparent_efficiency(),
        mdi_channel: channel.name().to_string(),
        mdi_lambda: opts.lambda,
        mdi_exact_witness: exact_witness(&channel, &bsm)?,
        mdi_witness: witness_estimate(&tally)?,
        chi_raw: ChiFile::from_matrix(&chi, None),
        chi_projected: ChiFile::from_matrix(&projected, None),
        note: "The MDI leg plays the measure-and-prepare channel induced by the adversary's \
               immediate measurement; without quantum storage every strategy reduces to an \
               entanglement-breaking channel."
            .into(),
    })
}
