//! Bell-state measurement: payoff tables, the visibility-degraded POVM and
//! the mode-overlap visibility model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{bell_state, BellLabel, CMatrix, StateLabel};

/// Announced BSM result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
    #[serde(rename = "0")]
    Zero,
}

impl Outcome {
    pub const ALL: [Outcome; 3] = [Outcome::Plus, Outcome::Minus, Outcome::Zero];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Plus => "+",
            Outcome::Minus => "-",
            Outcome::Zero => "0",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Outcome {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "+" => Ok(Outcome::Plus),
            "-" | "−" => Ok(Outcome::Minus),
            "0" => Ok(Outcome::Zero),
            other => Err(Error::invalid(format!("unknown outcome {other:?}"))),
        }
    }
}

/// A payoff value stored exactly as a count of halves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Halves(pub i8);

impl Halves {
    pub fn to_f64(self) -> f64 {
        f64::from(self.0) / 2.0
    }
}

// Rows index the stored photon x, columns the second photon y, both (H, V, D, R).
const W_PLUS: [[i8; 4]; 4] = [
    [0, -1, -1, 1],
    [-1, 0, -1, 1],
    [-1, -1, 2, 0],
    [1, 1, 0, -2],
];

const W_MINUS: [[i8; 4]; 4] = [
    [0, -1, 1, -1],
    [-1, 0, 1, -1],
    [1, 1, -2, 0],
    [-1, -1, 0, 2],
];

/// Payoff `w^b_{xy}`. `b = 0` always pays nothing.
pub fn payoff(b: Outcome, x: StateLabel, y: StateLabel) -> Halves {
    match b {
        Outcome::Plus => Halves(W_PLUS[x.index()][y.index()]),
        Outcome::Minus => Halves(W_MINUS[x.index()][y.index()]),
        Outcome::Zero => Halves(0),
    }
}

/// Dense `f64` view of the payoff tables, indexed `[b][x][y]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PayoffTable {
    values: [[[f64; 4]; 4]; 3],
}

impl PayoffTable {
    pub fn standard() -> Self {
        let mut values = [[[0.0; 4]; 4]; 3];
        for b in Outcome::ALL {
            for x in StateLabel::ALL {
                for y in StateLabel::ALL {
                    values[b.index()][x.index()][y.index()] = payoff(b, x, y).to_f64();
                }
            }
        }
        PayoffTable { values }
    }

    #[inline]
    pub fn get(&self, b: Outcome, x: StateLabel, y: StateLabel) -> f64 {
        self.values[b.index()][x.index()][y.index()]
    }
}

impl Default for PayoffTable {
    fn default() -> Self {
        Self::standard()
    }
}

/// Realistic BSM with Φ+/Φ- confusion probability `lambda`.
#[derive(Debug, Clone)]
pub struct BsmModel {
    lambda: f64,
    elements: [CMatrix; 3],
}

impl BsmModel {
    pub fn ideal() -> Self {
        bsm_povm(0.0).expect("0 is a valid lambda")
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// POVM element for outcome `b`.
    pub fn element(&self, b: Outcome) -> &CMatrix {
        &self.elements[b.index()]
    }
}

/// `S± = (1-λ)|Φ±⟩⟨Φ±| + λ|Φ∓⟩⟨Φ∓|`, `S0 = 1 - S+ - S-`.
pub fn bsm_povm(lambda: f64) -> Result<BsmModel> {
    if !(0.0..=0.5).contains(&lambda) {
        return Err(Error::invalid(format!("lambda {lambda} outside [0, 1/2]")));
    }
    let phi_p = bell_state(BellLabel::PhiPlus);
    let phi_m = bell_state(BellLabel::PhiMinus);
    let s_plus = &phi_p.scale_real(1.0 - lambda) + &phi_m.scale_real(lambda);
    let s_minus = &phi_m.scale_real(1.0 - lambda) + &phi_p.scale_real(lambda);
    let s_zero = &(&CMatrix::identity(4) - &s_plus) - &s_minus;
    Ok(BsmModel { lambda, elements: [s_plus, s_minus, s_zero] })
}

/// `λ = (1 - V²)/2`.
pub fn lambda_from_visibility(visibility: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&visibility) {
        return Err(Error::invalid(format!("visibility {visibility} outside [0, 1]")));
    }
    Ok((1.0 - visibility * visibility) / 2.0)
}

/// Interference visibility for a photon whose mode overlaps the reference
/// by amplitude `alpha`; equals `alpha`.
pub fn visibility_from_overlap(alpha: f64) -> Result<f64> {
    check_overlap(alpha)?;
    Ok(alpha)
}

/// Weight `β² = 1 - α²` of the distinguishable mode.
pub fn distinguishable_weight(alpha: f64) -> Result<f64> {
    check_overlap(alpha)?;
    Ok(1.0 - alpha * alpha)
}

fn check_overlap(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("overlap amplitude {alpha} outside [0, 1]")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::hermitian_eigenvalues;

    #[test]
    fn payoff_lookups() {
        use StateLabel::*;
        assert_eq!(payoff(Outcome::Plus, D, D), Halves(2));
        assert_eq!(payoff(Outcome::Minus, R, R), Halves(2));
        assert_eq!(payoff(Outcome::Plus, H, H), Halves(0));
        assert_eq!(payoff(Outcome::Plus, R, R).to_f64(), -1.0);
        assert_eq!(payoff(Outcome::Minus, H, D).to_f64(), 0.5);
        for x in StateLabel::ALL {
            for y in StateLabel::ALL {
                assert_eq!(payoff(Outcome::Zero, x, y), Halves(0));
            }
        }
    }

    #[test]
    fn payoff_checksum() {
        let total: i32 = StateLabel::ALL
            .iter()
            .flat_map(|&x| StateLabel::ALL.iter().map(move |&y| (x, y)))
            .map(|(x, y)| {
                i32::from(payoff(Outcome::Plus, x, y).0) + i32::from(payoff(Outcome::Minus, x, y).0)
            })
            .sum();
        // -2 in units of halves
        assert_eq!(total, -4);
    }

    #[test]
    fn povm_complete_and_positive() {
        for k in 0..=5 {
            let lambda = k as f64 / 10.0;
            let m = bsm_povm(lambda).unwrap();
            let sum = &(m.element(Outcome::Plus) + m.element(Outcome::Minus)) + m.element(Outcome::Zero);
            assert!(sum.max_abs_diff(&CMatrix::identity(4)) < 1e-12);
            for b in Outcome::ALL {
                assert!(hermitian_eigenvalues(m.element(b)).unwrap()[0] >= -1e-12);
            }
        }
    }

    #[test]
    fn povm_limits() {
        let phi_p = bell_state(BellLabel::PhiPlus);
        let phi_m = bell_state(BellLabel::PhiMinus);
        let ideal = bsm_povm(0.0).unwrap();
        assert_eq!(ideal.element(Outcome::Plus).max_abs_diff(&phi_p), 0.0);
        assert_eq!(ideal.element(Outcome::Minus).max_abs_diff(&phi_m), 0.0);

        let confused = bsm_povm(0.5).unwrap();
        let half = (&phi_p + &phi_m).scale_real(0.5);
        assert!(confused.element(Outcome::Plus).max_abs_diff(&half) < 1e-15);
        assert!(confused.element(Outcome::Minus).max_abs_diff(&half) < 1e-15);

        let s0 = &(&CMatrix::identity(4) - &phi_p) - &phi_m;
        for lambda in [0.0, 0.17, 0.5] {
            assert!(bsm_povm(lambda).unwrap().element(Outcome::Zero).max_abs_diff(&s0) < 1e-15);
        }
    }

    #[test]
    fn povm_rejects_out_of_range() {
        assert!(bsm_povm(-0.01).is_err());
        assert!(bsm_povm(0.51).is_err());
    }

    #[test]
    fn visibility_model() {
        assert_eq!(lambda_from_visibility(1.0).unwrap(), 0.0);
        assert_eq!(lambda_from_visibility(0.0).unwrap(), 0.5);
        let l = lambda_from_visibility(0.875).unwrap();
        assert!((l - 0.1171875).abs() < 1e-15);
        assert!(lambda_from_visibility(1.2).is_err());

        assert_eq!(visibility_from_overlap(1.0).unwrap(), 1.0);
        assert_eq!(visibility_from_overlap(0.0).unwrap(), 0.0);
        assert_eq!(visibility_from_overlap(0.875).unwrap(), 0.875);
        assert!((distinguishable_weight(0.875).unwrap() - 0.234375).abs() < 1e-15);
        assert!(visibility_from_overlap(-0.1).is_err());
    }

    #[test]
    fn outcome_parsing() {
        assert_eq!("−".parse::<Outcome>().unwrap(), Outcome::Minus);
        assert!("x".parse::<Outcome>().is_err());
    }
}
