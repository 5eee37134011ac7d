use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use mdi_core::bsm::bsm_povm;
use mdi_core::channels::{project_psd, ChiFile};
use mdi_core::game::{
    simulate_rounds_with, witness_estimate_with, ErrorMethod, SimulationOptions, Tally, TallyMeta,
    WitnessResult,
};
use mdi_core::predict::{load_chi_series, simulated_curve, theory_curve_with, write_curve_csv, CurveOptions};
use mdi_core::tomography::{
    process_fidelity, reconstruct_chi, run_attack_comparison, run_tomography_with, AttackOptions,
};

use crate::config::Config;
use crate::channel_spec::ChannelSpec;
use crate::{Cli, CliError, Command, CommonArgs};

/// Seed for bootstrap resampling; fixed so repeated runs agree.
const BOOTSTRAP_SEED: u64 = 0x5eed;

pub fn run(cli: Cli) -> Result<(), CliError> {
    let config = resolve_config(&cli.common)?;
    match cli.command {
        Command::Predict { times, bsm_noise, lambda, chi } => predict(config, times, bsm_noise, lambda, &chi),
        Command::Simulate { channel, rounds, lambda, detection_efficiency, bootstrap } => {
            let mut config = config;
            if let Some(r) = rounds {
                config.rounds = r;
            }
            if lambda.is_some() {
                config.lambda_override = lambda;
            }
            if detection_efficiency.is_some() {
                config.detection_efficiency = detection_efficiency;
            }
            config.validate()?;
            simulate(&config, &ChannelSpec::parse(&channel)?, bootstrap)
        }
        Command::Witness { tally, bootstrap } => witness(&config, &tally, bootstrap),
        Command::Tomography { channel, shots } => {
            let mut config = config;
            if let Some(s) = shots {
                config.shots = s;
            }
            config.validate()?;
            tomography(&config, &ChannelSpec::parse(&channel)?)
        }
        Command::Attack { leak, shots, rounds, lambda } => {
            let mut config = config;
            if let Some(l) = leak {
                config.leak = l;
            }
            if let Some(s) = shots {
                config.shots = s;
            }
            if let Some(r) = rounds {
                config.rounds = r;
            }
            if lambda.is_some() {
                config.lambda_override = lambda;
            }
            config.validate()?;
            attack(&config)
        }
    }
}

fn resolve_config(common: &CommonArgs) -> Result<Config, CliError> {
    let mut config = match &common.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output = Some(out.clone());
    }
    if let Some(w) = common.workers {
        config.workers = w;
    }
    config.validate()?;
    Ok(config)
}

fn predict(
    mut config: Config,
    times: Option<Vec<f64>>,
    bsm_noise: bool,
    lambda: Option<f64>,
    chi_files: &[PathBuf],
) -> Result<(), CliError> {
    if let Some(t) = times {
        config.times_us = t;
    }
    if config.times_us.is_empty() {
        return Err(CliError::Usage("time list is empty".into()));
    }
    config.include_bsm_noise |= bsm_noise;
    if lambda.is_some() {
        config.lambda_override = lambda;
        config.include_bsm_noise = true;
    }
    config.validate()?;

    let points = if chi_files.is_empty() {
        let opts = CurveOptions {
            include_bsm_noise: config.include_bsm_noise,
            combine: config.mode_combine,
            lambda_override: config.lambda_override,
        };
        theory_curve_with(&config.memory, &config.times_us, &opts).map_err(CliError::from_core)?
    } else {
        let files = chi_files
            .iter()
            .map(|p| ChiFile::read(p).map_err(|e| CliError::data(p.display(), e)))
            .collect::<Result<Vec<_>, _>>()?;
        let series = load_chi_series(&files).map_err(|e| CliError::Data(e.to_string()))?;
        let bsm = bsm_povm(config.lambda()?).map_err(CliError::from_core)?;
        simulated_curve(&series, &bsm).map_err(|e| CliError::Data(e.to_string()))?
    };

    let mut buf = Vec::new();
    write_curve_csv(&mut buf, &points).map_err(CliError::from_core)?;
    emit(config.output.as_deref(), &buf)
}

fn simulate(config: &Config, spec: &ChannelSpec, bootstrap: Option<u32>) -> Result<(), CliError> {
    let channel = spec.build()?;
    let lambda = config.lambda()?;
    let bsm = bsm_povm(lambda).map_err(CliError::from_core)?;
    let opts = SimulationOptions { workers: config.workers, detection_efficiency: config.detection_efficiency };
    let tally = simulate_rounds_with(&channel, &bsm, config.rounds, config.seed, &opts)
        .map_err(CliError::from_core)?;
    let result = estimate(&tally, bootstrap)?;

    if let Some(out) = &config.output {
        let mut csv = Vec::new();
        tally.write_csv(&mut csv).map_err(CliError::from_core)?;
        write_file(out, &csv)?;
        let meta = TallyMeta {
            seed: config.seed,
            rounds: config.rounds,
            channel: spec.describe(),
            lambda,
            detection_efficiency: config.detection_efficiency,
        };
        write_file(&sibling(out, "meta.json"), json(&meta)?.as_bytes())?;
        write_file(&sibling(out, "witness.json"), json(&result)?.as_bytes())?;
    }
    emit(None, json(&result)?.as_bytes())
}

fn witness(config: &Config, path: &Path, bootstrap: Option<u32>) -> Result<(), CliError> {
    let file = File::open(path).map_err(|e| CliError::data(path.display(), e))?;
    let mut tally = Tally::read_csv(file).map_err(|e| CliError::data(path.display(), e))?;
    let meta_path = sibling(path, "meta.json");
    if meta_path.exists() {
        let text = std::fs::read_to_string(&meta_path).map_err(|e| CliError::data(meta_path.display(), e))?;
        let meta: TallyMeta =
            serde_json::from_str(&text).map_err(|e| CliError::data(meta_path.display(), e))?;
        tally.seed = meta.seed;
        tally.rounds_attempted = meta.rounds;
    }
    let result = estimate(&tally, bootstrap)?;
    emit(config.output.as_deref(), json(&result)?.as_bytes())
}

fn estimate(tally: &Tally, bootstrap: Option<u32>) -> Result<WitnessResult, CliError> {
    let method = match bootstrap {
        Some(resamples) => ErrorMethod::Bootstrap { resamples, seed: BOOTSTRAP_SEED },
        None => ErrorMethod::DeltaMethod,
    };
    witness_estimate_with(tally, method).map_err(|e| match e {
        mdi_core::Error::InvalidArgument(_) => CliError::Usage(e.to_string()),
        other => CliError::Data(other.to_string()),
    })
}

fn tomography(config: &Config, spec: &ChannelSpec) -> Result<(), CliError> {
    let channel = spec.build()?;
    let record =
        run_tomography_with(&channel, config.shots, config.seed, config.workers).map_err(CliError::from_core)?;
    if let Some(out) = &config.output {
        let chi = reconstruct_chi(&record).map_err(|e| CliError::Data(e.to_string()))?;
        let projected = project_psd(&chi).map_err(|e| CliError::Data(e.to_string()))?;
        let mut raw = ChiFile::from_matrix(&chi, None);
        raw.description = Some(format!(
            "linear inversion of {}, process fidelity {}",
            spec.describe(),
            process_fidelity(&chi)
        ));
        let mut psd = ChiFile::from_matrix(&projected, None);
        psd.description = Some(format!("PSD projection, process fidelity {}", process_fidelity(&projected)));
        write_file(&sibling(out, "chi.json"), json(&raw)?.as_bytes())?;
        write_file(&sibling(out, "chi-psd.json"), json(&psd)?.as_bytes())?;
    }
    emit(config.output.as_deref(), json(&record)?.as_bytes())
}

fn attack(config: &Config) -> Result<(), CliError> {
    let opts = AttackOptions { leak: config.leak, lambda: config.lambda()?, workers: config.workers };
    let report =
        run_attack_comparison(config.shots, config.rounds, config.seed, &opts).map_err(CliError::from_core)?;
    emit(config.output.as_deref(), json(&report)?.as_bytes())
}

fn json<T: serde::Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Data(e.to_string()))
}

/// `out.csv` -> `out.csv.<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".");
    name.push(suffix);
    PathBuf::from(name)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::data(path.display(), e))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes).and_then(|_| w.flush()).map_err(|e| CliError::data(path.display(), e))
}

fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => write_file(p, bytes),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(bytes)
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::Data(format!("stdout: {e}")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sibling_appends_suffix() {
        assert_eq!(sibling(Path::new("dir/t.csv"), "meta.json"), PathBuf::from("dir/t.csv.meta.json"));
    }
}
