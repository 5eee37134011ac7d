//! Prediction chain from measured memory parameters to the expected witness
//! as a function of storage time, plus the process-matrix driven curve.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bsm::{bsm_povm, lambda_from_visibility, BsmModel};
use crate::channels::{depolarizing, from_chi, ChiFile};
use crate::error::{Error, Result};
use crate::game::exact_witness;
use crate::qcore::CMatrix;

/// Measured characteristics of the memory and the optical setup.
/// Times are in microseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryParams {
    /// Single-photon efficiency.
    pub p_ph: f64,
    pub eta_opt: f64,
    pub eta_det: f64,
    /// Zero-time storage efficiency of the two spatial modes.
    pub eta_m0: [f64; 2],
    /// Storage lifetime of the two spatial modes.
    pub tau_m_us: [f64; 2],
    /// Noise probability per trial.
    pub p_noise: f64,
    /// Interference visibility between stored and unstored photons.
    pub visibility: f64,
    /// Alternate zero-time efficiencies kept for reference. Never used in
    /// computation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_m0_alternate: Option<[f64; 2]>,
}

impl MemoryParams {
    /// Parameters of the reference EIT memory experiment.
    pub fn reference() -> Self {
        MemoryParams {
            p_ph: 0.060,
            eta_opt: 0.108,
            eta_det: 0.70,
            eta_m0: [0.269, 0.250],
            tau_m_us: [58.2, 56.6],
            p_noise: 8.57e-5,
            visibility: 0.875,
            eta_m0_alternate: Some([0.269, 0.285]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("p_ph", self.p_ph),
            ("eta_opt", self.eta_opt),
            ("eta_det", self.eta_det),
            ("eta_m0[0]", self.eta_m0[0]),
            ("eta_m0[1]", self.eta_m0[1]),
            ("p_noise", self.p_noise),
            ("visibility", self.visibility),
        ];
        for (name, v) in probs {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} = {v} outside [0, 1]")));
            }
        }
        for (i, &tau) in self.tau_m_us.iter().enumerate() {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(Error::invalid(format!("tau_m_us[{i}] = {tau} must be positive")));
            }
        }
        Ok(())
    }
}

/// How the two spatial modes enter the scalar signal probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeCombine {
    #[default]
    Mean,
    Min,
    First,
    Second,
}

/// `η_m(t) = η0 · exp(-t²/τ²)`.
pub fn storage_efficiency(t_us: f64, eta0: f64, tau_us: f64) -> Result<f64> {
    if t_us < 0.0 || t_us.is_nan() {
        return Err(Error::invalid(format!("storage time {t_us} is negative")));
    }
    if !(tau_us > 0.0) {
        return Err(Error::invalid(format!("lifetime {tau_us} must be positive")));
    }
    Ok(eta0 * (-(t_us * t_us) / (tau_us * tau_us)).exp())
}

pub fn combined_storage_efficiency(t_us: f64, params: &MemoryParams, combine: ModeCombine) -> Result<f64> {
    let m1 = storage_efficiency(t_us, params.eta_m0[0], params.tau_m_us[0])?;
    let m2 = storage_efficiency(t_us, params.eta_m0[1], params.tau_m_us[1])?;
    Ok(match combine {
        ModeCombine::Mean => 0.5 * (m1 + m2),
        ModeCombine::Min => m1.min(m2),
        ModeCombine::First => m1,
        ModeCombine::Second => m2,
    })
}

pub fn signal_probability(t_us: f64, params: &MemoryParams, combine: ModeCombine) -> Result<f64> {
    let eta_m = combined_storage_efficiency(t_us, params, combine)?;
    Ok(params.p_ph * eta_m * params.eta_opt * params.eta_det)
}

/// Depolarizing strength from `(1-p)/p = SNR`: `p = P_noise / (P_signal + P_noise)`.
pub fn noise_strength(t_us: f64, params: &MemoryParams) -> Result<f64> {
    noise_strength_with(t_us, params, ModeCombine::Mean)
}

pub fn noise_strength_with(t_us: f64, params: &MemoryParams, combine: ModeCombine) -> Result<f64> {
    let signal = signal_probability(t_us, params, combine)?;
    let total = signal + params.p_noise;
    if total <= 0.0 {
        return Err(Error::UndefinedSnr);
    }
    Ok(params.p_noise / total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub t_us: f64,
    pub witness: f64,
    pub lambda: f64,
    /// Depolarizing strength; absent for process-matrix driven points.
    pub p: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveOptions {
    pub include_bsm_noise: bool,
    pub combine: ModeCombine,
    /// Replaces the visibility-derived lambda when noise is included.
    pub lambda_override: Option<f64>,
}

impl Default for CurveOptions {
    fn default() -> Self {
        CurveOptions { include_bsm_noise: false, combine: ModeCombine::Mean, lambda_override: None }
    }
}

pub fn theory_curve(params: &MemoryParams, times_us: &[f64], include_bsm_noise: bool) -> Result<Vec<CurvePoint>> {
    theory_curve_with(params, times_us, &CurveOptions { include_bsm_noise, ..Default::default() })
}

/// Witness of the depolarizing memory model at each storage time.
pub fn theory_curve_with(params: &MemoryParams, times_us: &[f64], opts: &CurveOptions) -> Result<Vec<CurvePoint>> {
    params.validate()?;
    check_times(times_us)?;
    let lambda = if opts.include_bsm_noise {
        match opts.lambda_override {
            Some(l) => l,
            None => lambda_from_visibility(params.visibility)?,
        }
    } else {
        0.0
    };
    let bsm = bsm_povm(lambda)?;
    times_us
        .iter()
        .map(|&t| {
            let p = noise_strength_with(t, params, opts.combine)?;
            let witness = exact_witness(&depolarizing(p)?, &bsm)?;
            Ok(CurvePoint { t_us: t, witness, lambda, p: Some(p) })
        })
        .collect()
}

fn check_times(times_us: &[f64]) -> Result<()> {
    if times_us.is_empty() {
        return Err(Error::invalid("time list is empty"));
    }
    if times_us.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(Error::invalid("storage times must be finite and nonnegative"));
    }
    if times_us.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("storage times must be ascending"));
    }
    Ok(())
}

/// Witness predicted from measured process matrices, one per storage time.
pub fn simulated_curve(chis: &[(f64, CMatrix)], bsm: &BsmModel) -> Result<Vec<CurvePoint>> {
    chis.iter()
        .enumerate()
        .map(|(i, (t, chi))| {
            let channel = from_chi(chi).map_err(|e| Error::invalid(format!("chi #{i} (t = {t} us): {e}")))?;
            let witness = exact_witness(&channel, bsm)?;
            Ok(CurvePoint { t_us: *t, witness, lambda: bsm.lambda(), p: None })
        })
        .collect()
}

/// Reads chi files that carry a storage time.
pub fn load_chi_series(files: &[ChiFile]) -> Result<Vec<(f64, CMatrix)>> {
    let mut out = files
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let t = f
                .storage_time_us
                .ok_or_else(|| Error::invalid(format!("chi file #{i} has no storage_time_us")))?;
            Ok((t, f.matrix()?))
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

/// Writes `t_us,witness,lambda,p`. `p` is empty when absent.
pub fn write_curve_csv<W: Write>(mut out: W, points: &[CurvePoint]) -> Result<()> {
    writeln!(out, "t_us,witness,lambda,p")?;
    for pt in points {
        let p = pt.p.map(|p| p.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{}", pt.t_us, pt.witness, pt.lambda, p)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::depolarizing_chi;

    #[test]
    fn storage_efficiency_examples() {
        assert_eq!(storage_efficiency(0.0, 0.269, 58.2).unwrap(), 0.269);
        let e = std::f64::consts::E;
        assert!((storage_efficiency(58.2, 0.269, 58.2).unwrap() - 0.269 / e).abs() < 1e-15);
        assert!((storage_efficiency(58.2, 0.269, 58.2).unwrap() - 0.0990).abs() < 1e-4);
        assert!(storage_efficiency(-1.0, 0.269, 58.2).is_err());
    }

    #[test]
    fn storage_decay_ratio_is_independent_of_eta0() {
        for eta0 in [0.1, 0.5, 0.9] {
            let ratio = storage_efficiency(30.0, eta0, 40.0).unwrap() / storage_efficiency(0.0, eta0, 40.0).unwrap();
            assert!((ratio - (-(30.0f64 / 40.0).powi(2)).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn noise_strength_limits() {
        let mut params = MemoryParams::reference();
        params.p_noise = 0.0;
        assert_eq!(noise_strength(0.0, &params).unwrap(), 0.0);

        let mut params = MemoryParams::reference();
        params.p_noise = signal_probability(0.0, &params, ModeCombine::Mean).unwrap();
        assert!((noise_strength(0.0, &params).unwrap() - 0.5).abs() < 1e-15);

        let mut params = MemoryParams::reference();
        params.p_noise = 0.0;
        params.p_ph = 0.0;
        assert!(matches!(noise_strength(0.0, &params), Err(Error::UndefinedSnr)));
    }

    #[test]
    fn noise_strength_reference_at_zero() {
        // hand-evaluated formula chain
        let signal = 0.060 * ((0.269 + 0.250) / 2.0) * 0.108 * 0.70;
        let expected = 8.57e-5 / (signal + 8.57e-5);
        let p = noise_strength(0.0, &MemoryParams::reference()).unwrap();
        assert!((p - expected).abs() < 1e-15);
        assert!((p - 0.06788).abs() < 1e-4);
    }

    #[test]
    fn mode_combination_strategies() {
        let params = MemoryParams::reference();
        let mean = combined_storage_efficiency(0.0, &params, ModeCombine::Mean).unwrap();
        assert!((mean - 0.2595).abs() < 1e-15);
        assert_eq!(combined_storage_efficiency(0.0, &params, ModeCombine::Min).unwrap(), 0.250);
        assert_eq!(combined_storage_efficiency(0.0, &params, ModeCombine::First).unwrap(), 0.269);
        assert_eq!(combined_storage_efficiency(0.0, &params, ModeCombine::Second).unwrap(), 0.250);
    }

    #[test]
    fn theory_curve_without_noise_is_flat_one() {
        let mut params = MemoryParams::reference();
        params.p_noise = 0.0;
        let curve = theory_curve(&params, &[0.0, 20.0, 60.0], false).unwrap();
        assert!(curve.iter().all(|pt| (pt.witness - 1.0).abs() < 1e-12));
    }

    #[test]
    fn theory_curve_reference_shape() {
        let times: Vec<f64> = (0..=6).map(|k| 10.0 * k as f64).collect();
        let curve = theory_curve(&MemoryParams::reference(), &times, false).unwrap();
        assert!(curve.iter().all(|pt| pt.witness > 0.0 && pt.witness < 1.0));
        assert!(curve.windows(2).all(|w| w[1].witness < w[0].witness));
        assert!(curve.windows(2).all(|w| w[1].p.unwrap() > w[0].p.unwrap()));
        for pt in &curve {
            assert!((pt.witness - (1.0 - 1.5 * pt.p.unwrap())).abs() < 1e-12);
        }
    }

    #[test]
    fn theory_curve_with_bsm_noise() {
        let curve = theory_curve(&MemoryParams::reference(), &[0.0], true).unwrap();
        assert!((curve[0].lambda - 0.1171875).abs() < 1e-15);
        let plain = theory_curve(&MemoryParams::reference(), &[0.0], false).unwrap();
        assert!(curve[0].witness < plain[0].witness);
    }

    #[test]
    fn theory_curve_rejects_bad_times() {
        let params = MemoryParams::reference();
        assert!(theory_curve(&params, &[], false).is_err());
        assert!(theory_curve(&params, &[10.0, 5.0], false).is_err());
        assert!(theory_curve(&params, &[-1.0], false).is_err());
    }

    #[test]
    fn simulated_curve_matches_theory_for_depolarizing_chi() {
        let params = MemoryParams::reference();
        let times = [0.0, 30.0, 60.0];
        let theory = theory_curve(&params, &times, false).unwrap();
        let chis: Vec<(f64, CMatrix)> = theory.iter().map(|pt| (pt.t_us, depolarizing_chi(pt.p.unwrap()))).collect();
        let sim = simulated_curve(&chis, &BsmModel::ideal()).unwrap();
        for (a, b) in sim.iter().zip(&theory) {
            assert!((a.witness - b.witness).abs() < 1e-12);
        }
        let mut id = CMatrix::zeros(4, 4);
        id[(0, 0)] = crate::qcore::ONE;
        let sim = simulated_curve(&[(0.0, id)], &BsmModel::ideal()).unwrap();
        assert!((sim[0].witness - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dephasing_at_least_matches_depolarizing_of_equal_fidelity() {
        // Both maps lose weight q from the identity component.
        for q in [0.1, 0.4, 0.75] {
            let dephase = CMatrix::diag(&[1.0 - q, 0.0, 0.0, q]);
            let dep = depolarizing_chi(4.0 * q / 3.0);
            let sim = simulated_curve(&[(0.0, dephase), (1.0, dep)], &BsmModel::ideal()).unwrap();
            assert!(sim[0].witness >= sim[1].witness - 1e-12, "{sim:?}");
        }
    }

    #[test]
    fn simulated_curve_names_bad_entry() {
        let bad = CMatrix::diag(&[1.5, -0.5, 0.0, 0.0]);
        let good = depolarizing_chi(0.1);
        let err = simulated_curve(&[(0.0, good), (5.0, bad)], &BsmModel::ideal()).unwrap_err();
        assert!(err.to_string().contains("chi #1"), "{err}");
    }

    #[test]
    fn params_validation() {
        let mut p = MemoryParams::reference();
        p.tau_m_us[1] = 0.0;
        assert!(p.validate().is_err());
        let mut p = MemoryParams::reference();
        p.visibility = 1.5;
        assert!(p.validate().is_err());
    }

    #[test]
    fn curve_csv_layout() {
        let pts = [
            CurvePoint { t_us: 0.0, witness: 0.5, lambda: 0.0, p: Some(0.25) },
            CurvePoint { t_us: 5.0, witness: 0.25, lambda: 0.1, p: None },
        ];
        let mut buf = Vec::new();
        write_curve_csv(&mut buf, &pts).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t_us,witness,lambda,p\n0,0.5,0,0.25\n5,0.25,0.1,\n");
    }

    #[test]
    fn chi_series_requires_times() {
        let f = ChiFile::from_matrix(&depolarizing_chi(0.1), None);
        assert!(load_chi_series(&[f]).is_err());
        let a = ChiFile::from_matrix(&depolarizing_chi(0.1), Some(20.0));
        let b = ChiFile::from_matrix(&depolarizing_chi(0.0), Some(0.0));
        let series = load_chi_series(&[a, b]).unwrap();
        assert_eq!(series[0].0, 0.0);
    }
}
