//! Single-qubit channels: Kraus and process-matrix forms, Choi states, the
//! memory models used by the protocol and the entanglement-breaking test.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{
    hermitian_eigen, kron, partial_transpose, sigma_x, sigma_y, sigma_z, BellLabel, CMatrix,
    Subsystem, C64, EPS_HERM, EPS_PSD, I, ONE,
};

/// Completeness tolerance for Kraus sets.
pub const EPS_KRAUS: f64 = 1e-10;
/// Completeness and negativity tolerance for measured process matrices.
pub const EPS_CHI: f64 = 1e-6;
/// PPT threshold for the entanglement-breaking decision.
pub const EPS_EB: f64 = 1e-10;

/// Process-matrix basis labels as they appear in chi files.
pub const CHI_BASIS_LABELS: [&str; 4] = ["I", "X", "-iY", "Z"];

/// The operator basis `{1, X, -iY, Z}` in which process matrices are expressed.
pub fn chi_basis() -> [CMatrix; 4] {
    [CMatrix::identity(2), sigma_x(), sigma_y().scale(-I), sigma_z()]
}

/// Vectors `(E_m ⊗ 1)|Φ+⟩`. They are orthonormal and link chi and Choi forms:
/// `χ_mn = ⟨v_m| J |v_n⟩`.
fn chi_choi_vectors() -> [CMatrix; 4] {
    let phi = BellLabel::PhiPlus.ket();
    let id = CMatrix::identity(2);
    chi_basis().map(|e| &kron(&e, &id) * &phi)
}

#[derive(Debug, Clone)]
pub enum Representation {
    Kraus(Vec<CMatrix>),
    Chi(CMatrix),
}

/// A completely positive, trace-preserving single-qubit map.
#[derive(Debug, Clone)]
pub struct Channel {
    repr: Representation,
    name: String,
}

impl Channel {
    /// Builds a channel from Kraus operators, checking `Σ K†K = 1`.
    pub fn from_kraus(name: impl Into<String>, ops: Vec<CMatrix>) -> Result<Self> {
        if ops.is_empty() {
            return Err(Error::invalid("empty Kraus set"));
        }
        let mut completeness = CMatrix::zeros(2, 2);
        for k in &ops {
            if k.dims() != (2, 2) {
                return Err(Error::invalid(format!("Kraus operator has shape {:?}", k.dims())));
            }
            completeness = &completeness + &(&k.adjoint() * k);
        }
        let dev = completeness.max_abs_diff(&CMatrix::identity(2));
        if dev > EPS_KRAUS {
            return Err(Error::InvalidState(format!(
                "Kraus set is not trace preserving (deviation {dev:.3e})"
            )));
        }
        Ok(Channel { repr: Representation::Kraus(ops), name: name.into() })
    }

    pub fn identity() -> Self {
        Channel {
            repr: Representation::Kraus(vec![CMatrix::identity(2)]),
            name: "identity".into(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn representation(&self) -> &Representation {
        &self.repr
    }

    /// Applies the map to an arbitrary 2x2 operator. Linear; no normalization.
    fn apply_linear(&self, op: &CMatrix) -> CMatrix {
        match &self.repr {
            Representation::Kraus(ops) => ops.iter().fold(CMatrix::zeros(2, 2), |acc, k| {
                &acc + &(&(k * op) * &k.adjoint())
            }),
            Representation::Chi(chi) => {
                let basis = chi_basis();
                let mut out = CMatrix::zeros(2, 2);
                for (m, em) in basis.iter().enumerate() {
                    let left = em * op;
                    for (n, en) in basis.iter().enumerate() {
                        let c = chi[(m, n)];
                        if c == C64::new(0.0, 0.0) {
                            continue;
                        }
                        out = &out + &(&left * &en.adjoint()).scale(c);
                    }
                }
                out
            }
        }
    }

    /// Applies the channel to a qubit density operator.
    ///
    /// Process matrices that are complete only to within [`EPS_CHI`] have
    /// their output renormalized to unit trace.
    pub fn apply(&self, rho: &CMatrix) -> Result<CMatrix> {
        rho.validate_density()?;
        if rho.dims() != (2, 2) {
            return Err(Error::invalid("apply expects a single-qubit state"));
        }
        let out = self.apply_linear(rho);
        match self.repr {
            Representation::Kraus(_) => Ok(out),
            Representation::Chi(_) => {
                let tr = out.trace().re;
                if tr <= 0.0 {
                    return Err(Error::InvalidState(format!("channel output has trace {tr}")));
                }
                Ok(out.scale_real(1.0 / tr))
            }
        }
    }

    /// Process matrix of this channel in the `{1, X, -iY, Z}` basis.
    pub fn chi_matrix(&self) -> CMatrix {
        match &self.repr {
            Representation::Chi(chi) => chi.clone(),
            Representation::Kraus(_) => {
                let j = self.choi_unnormalized();
                let v = chi_choi_vectors();
                let mut chi = CMatrix::zeros(4, 4);
                for m in 0..4 {
                    let jv: Vec<CMatrix> = (0..4).map(|n| &j * &v[n]).collect();
                    for n in 0..4 {
                        chi[(m, n)] = v[m].inner(&jv[n]);
                    }
                }
                chi
            }
        }
    }

    /// `½ Σ_ij N(|i⟩⟨j|) ⊗ |i⟩⟨j|`.
    fn choi_unnormalized(&self) -> CMatrix {
        let mut j = CMatrix::zeros(4, 4);
        for a in 0..2 {
            for b in 0..2 {
                let mut unit = CMatrix::zeros(2, 2);
                unit[(a, b)] = ONE;
                let image = self.apply_linear(&unit);
                j = &j + &kron(&image, &unit).scale_real(0.5);
            }
        }
        j
    }
}

/// Choi state `J = (N ⊗ 1)|Φ+⟩⟨Φ+|`.
#[derive(Debug, Clone)]
pub struct ChoiState {
    pub j: CMatrix,
}

impl ChoiState {
    /// Reduced state of the untouched (second) qubit; `1/2` for any
    /// trace-preserving channel.
    pub fn reference_marginal(&self) -> CMatrix {
        let mut out = CMatrix::zeros(2, 2);
        for c in 0..2 {
            for d in 0..2 {
                out[(c, d)] = self.j[(c, d)] + self.j[(2 + c, 2 + d)];
            }
        }
        out
    }
}

pub fn choi(channel: &Channel) -> ChoiState {
    let mut j = channel.choi_unnormalized();
    if let Representation::Chi(_) = channel.repr {
        let tr = j.trace().re;
        j = j.scale_real(1.0 / tr);
    }
    ChoiState { j: j.hermitian_part() }
}

/// `N(ρ) = (1-p)ρ + p·1/2` in canonical Kraus form.
pub fn depolarizing(p: f64) -> Result<Channel> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("depolarizing strength {p} outside [0, 1]")));
    }
    let ops = vec![
        CMatrix::identity(2).scale_real((1.0 - 0.75 * p).sqrt()),
        sigma_x().scale_real((0.25 * p).sqrt()),
        sigma_y().scale_real((0.25 * p).sqrt()),
        sigma_z().scale_real((0.25 * p).sqrt()),
    ];
    Channel::from_kraus(format!("depolarizing({p})"), ops)
}

/// Process matrix of `depolarizing(p)`: `diag(1-3p/4, p/4, p/4, p/4)`.
pub fn depolarizing_chi(p: f64) -> CMatrix {
    CMatrix::diag(&[1.0 - 0.75 * p, 0.25 * p, 0.25 * p, 0.25 * p])
}

/// Tolerances applied when accepting a process matrix.
#[derive(Debug, Clone, Copy)]
pub struct ChiTolerance {
    pub hermiticity: f64,
    /// Largest accepted negative eigenvalue magnitude; anything between
    /// `EPS_PSD` and this is clipped.
    pub negativity: f64,
    pub completeness: f64,
}

impl Default for ChiTolerance {
    fn default() -> Self {
        ChiTolerance { hermiticity: EPS_CHI, negativity: EPS_CHI, completeness: EPS_CHI }
    }
}

/// Channel from a process matrix with default tolerances.
pub fn from_chi(chi: &CMatrix) -> Result<Channel> {
    from_chi_with(chi, ChiTolerance::default())
}

pub fn from_chi_with(chi: &CMatrix, tol: ChiTolerance) -> Result<Channel> {
    if chi.dims() != (4, 4) {
        return Err(Error::invalid(format!("chi must be 4x4, got {:?}", chi.dims())));
    }
    if !chi.is_hermitian(tol.hermiticity) {
        return Err(Error::invalid(format!(
            "chi is not Hermitian (deviation {:.3e})",
            chi.max_abs_diff(&chi.adjoint())
        )));
    }
    let chi = chi.hermitian_part();
    let eig = hermitian_eigen(&chi)?;
    let min = eig.values[0];
    if min < -tol.negativity {
        return Err(Error::InvalidChi { min_eigenvalue: min, tolerance: tol.negativity });
    }
    let chi = if min < -EPS_PSD {
        log::warn!("chi has negative eigenvalue {min:.3e}; projecting onto the PSD cone");
        project_psd(&chi)?
    } else {
        chi
    };

    let basis = chi_basis();
    let mut completeness = CMatrix::zeros(2, 2);
    for m in 0..4 {
        for n in 0..4 {
            completeness = &completeness + &(&basis[n].adjoint() * &basis[m]).scale(chi[(m, n)]);
        }
    }
    let dev = completeness.max_abs_diff(&CMatrix::identity(2));
    if dev > tol.completeness {
        return Err(Error::InvalidState(format!(
            "chi is not trace preserving (deviation {dev:.3e})"
        )));
    }
    Ok(Channel { repr: Representation::Chi(chi), name: "chi".into() })
}

/// Nearest PSD process matrix: clip negative eigenvalues, rescale to unit trace.
pub fn project_psd(chi: &CMatrix) -> Result<CMatrix> {
    let eig = hermitian_eigen(&chi.hermitian_part())?;
    let clipped: Vec<f64> = eig.values.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidState("chi has no positive spectrum".into()));
    }
    let lambda = CMatrix::diag(&clipped.iter().map(|v| v / total).collect::<Vec<_>>());
    Ok((&(&eig.vectors * &lambda) * &eig.vectors.adjoint()).hermitian_part())
}

/// An orthonormal qubit basis `{|0_k⟩, |1_k⟩}`.
#[derive(Debug, Clone)]
pub struct QubitBasis {
    kets: [CMatrix; 2],
}

impl QubitBasis {
    pub fn new(first: CMatrix, second: CMatrix) -> Result<Self> {
        for k in [&first, &second] {
            if k.dims() != (2, 1) {
                return Err(Error::invalid(format!("basis vector has shape {:?}", k.dims())));
            }
        }
        let n0 = first.inner(&first).re;
        let n1 = second.inner(&second).re;
        let overlap = first.inner(&second).norm();
        if (n0 - 1.0).abs() > EPS_HERM || (n1 - 1.0).abs() > EPS_HERM || overlap > EPS_HERM {
            return Err(Error::invalid("basis vectors are not orthonormal"));
        }
        Ok(QubitBasis { kets: [first, second] })
    }

    pub fn kets(&self) -> &[CMatrix; 2] {
        &self.kets
    }

    pub fn projectors(&self) -> [CMatrix; 2] {
        [self.kets[0].outer(), self.kets[1].outer()]
    }
}

/// Measure-and-prepare channel: with probability `w_k` measure in basis `k`
/// and re-prepare the observed basis state.
pub fn intercept_resend(bases: &[QubitBasis], weights: &[f64]) -> Result<Channel> {
    if bases.is_empty() || bases.len() != weights.len() {
        return Err(Error::invalid("need one weight per basis"));
    }
    if weights.iter().any(|&w| !(0.0..=1.0).contains(&w)) {
        return Err(Error::invalid("weights must lie in [0, 1]"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::invalid(format!("weights sum to {total}, not 1")));
    }
    let mut ops = Vec::with_capacity(2 * bases.len());
    for (basis, &w) in bases.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        for proj in basis.projectors() {
            ops.push(proj.scale_real(w.sqrt()));
        }
    }
    Channel::from_kraus(format!("intercept-resend({} bases)", bases.len()), ops)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EbVerdict {
    pub entanglement_breaking: bool,
    /// Smallest eigenvalue of the partially transposed Choi state.
    pub margin: f64,
}

/// PPT test on the Choi state; exact for qubit channels.
pub fn is_entanglement_breaking(channel: &Channel) -> EbVerdict {
    let j = choi(channel).j;
    let pt = partial_transpose(&j, Subsystem::Second).expect("Choi state is 4x4");
    let margin = hermitian_eigen(&pt).expect("partial transpose is Hermitian").values[0];
    EbVerdict { entanglement_breaking: margin >= -EPS_EB, margin }
}

/// On-disk process matrix: 4x4 `[re, im]` pairs over the `{I, X, -iY, Z}` basis.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ChiFile {
    pub basis: Vec<String>,
    pub chi: Vec<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub storage_time_us: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl ChiFile {
    pub fn from_matrix(chi: &CMatrix, storage_time_us: Option<f64>) -> Self {
        let rows = (0..4)
            .map(|m| (0..4).map(|n| [chi[(m, n)].re, chi[(m, n)].im]).collect())
            .collect();
        ChiFile {
            basis: CHI_BASIS_LABELS.iter().map(|s| s.to_string()).collect(),
            chi: rows,
            storage_time_us,
            description: None,
        }
    }

    pub fn matrix(&self) -> Result<CMatrix> {
        if self.basis != CHI_BASIS_LABELS {
            return Err(Error::invalid(format!(
                "chi basis must be {CHI_BASIS_LABELS:?}, got {:?}",
                self.basis
            )));
        }
        if self.chi.len() != 4 || self.chi.iter().any(|r| r.len() != 4) {
            return Err(Error::invalid("chi must be a 4x4 array of [re, im] pairs"));
        }
        let rows: Vec<Vec<C64>> = self
            .chi
            .iter()
            .map(|r| r.iter().map(|&[re, im]| C64::new(re, im)).collect())
            .collect();
        Ok(CMatrix::from_rows(&rows))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}
