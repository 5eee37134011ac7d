//! Dense complex linear algebra for one- and two-qubit operators, and the
//! fixed state vocabulary used by the protocol.
//!
//! Qubit basis ordering is `(H, V)`; two-qubit ordering is `(HH, HV, VH, VV)`
//! with qubit 1 always the photon that passes through the memory.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Hermiticity tolerance for inputs to the eigensolver.
pub const EPS_HERM: f64 = 1e-10;
/// Jacobi convergence threshold on the off-diagonal Frobenius norm.
pub const EPS_EIG: f64 = 1e-13;
/// Trace tolerance for density operators.
pub const EPS_TRACE: f64 = 1e-12;
/// Lowest eigenvalue still accepted as positive semidefinite.
pub const EPS_PSD: f64 = 1e-10;

const MAX_JACOBI_SWEEPS: usize = 100;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Dense row-major complex matrix.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    /// Builds a matrix from row slices. Panics on ragged input.
    pub fn from_rows<R: AsRef<[C64]>>(rows: &[R]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.as_ref().len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.as_ref().len(), c, "ragged rows");
            data.extend_from_slice(row.as_ref());
        }
        CMatrix { rows: r, cols: c, data }
    }

    pub fn from_real_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let complex: Vec<Vec<C64>> = rows
            .iter()
            .map(|row| row.as_ref().iter().map(|&v| C64::new(v, 0.0)).collect())
            .collect();
        Self::from_rows(&complex)
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = C64::new(v, 0.0);
        }
        m
    }

    /// Column vector.
    pub fn ket(amplitudes: &[C64]) -> Self {
        CMatrix { rows: amplitudes.len(), cols: 1, data: amplitudes.to_vec() }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn scale(&self, factor: C64) -> Self {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * factor).collect(),
        }
    }

    pub fn scale_real(&self, factor: f64) -> Self {
        self.scale(C64::new(factor, 0.0))
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// `|v><v|` for a column vector `v`.
    pub fn outer(&self) -> Self {
        assert_eq!(self.cols, 1, "outer() expects a column vector");
        self * &self.adjoint()
    }

    /// `<self|other>` for column vectors.
    pub fn inner(&self, other: &CMatrix) -> C64 {
        assert_eq!((self.cols, other.cols), (1, 1), "inner() expects column vectors");
        assert_eq!(self.rows, other.rows);
        self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum()
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        assert_eq!(self.dims(), other.dims());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square() && self.max_abs_diff(&self.adjoint()) <= tol
    }

    /// Mean of `self` and its adjoint. Removes round-off anti-Hermitian parts.
    pub fn hermitian_part(&self) -> Self {
        (self + &self.adjoint()).scale_real(0.5)
    }

    /// `Tr[self * other]` without forming the product.
    pub fn trace_product(&self, other: &CMatrix) -> C64 {
        assert_eq!(self.cols, other.rows);
        assert_eq!(self.rows, other.cols);
        let mut acc = ZERO;
        for i in 0..self.rows {
            for k in 0..self.cols {
                acc += self[(i, k)] * other[(k, i)];
            }
        }
        acc
    }

    /// Checks the density-operator invariant: Hermitian, unit trace and
    /// positive semidefinite.
    pub fn validate_density(&self) -> Result<()> {
        if !self.is_square() || !matches!(self.rows, 2 | 4) {
            return Err(Error::invalid(format!(
                "density operator must be 2x2 or 4x4, got {}x{}",
                self.rows, self.cols
            )));
        }
        if !self.is_hermitian(EPS_HERM) {
            return Err(Error::InvalidState("operator is not Hermitian".into()));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(Error::InvalidState(format!("trace {tr} is not 1")));
        }
        let min = hermitian_eigenvalues(self)?[0];
        if min < -EPS_PSD {
            return Err(Error::InvalidState(format!(
                "operator has negative eigenvalue {min:.3e}"
            )));
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, rhs.rows, "dimension mismatch in product");
        let mut out = CMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        out
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dims(), rhs.dims(), "dimension mismatch in sum");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dims(), rhs.dims(), "dimension mismatch in difference");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:>9.5}{:+.5}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Kronecker product of two single-qubit operators; `a` acts on qubit 1.
pub fn tensor_product(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    if a.dims() != (2, 2) || b.dims() != (2, 2) {
        return Err(Error::invalid(format!(
            "tensor_product expects 2x2 factors, got {:?} and {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(kron(a, b))
}

/// Unchecked Kronecker product of arbitrary shapes.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.dims();
    let (br, bc) = b.dims();
    let mut out = CMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Which qubit of a two-qubit operator to transpose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsystem {
    First,
    Second,
}

/// Partial transpose of a 4x4 operator on the chosen qubit.
pub fn partial_transpose(rho: &CMatrix, subsystem: Subsystem) -> Result<CMatrix> {
    if rho.dims() != (4, 4) {
        return Err(Error::invalid(format!(
            "partial_transpose expects 4x4, got {:?}",
            rho.dims()
        )));
    }
    let mut out = CMatrix::zeros(4, 4);
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                for d in 0..2 {
                    // <a b| rho |c d>
                    let v = rho[(2 * a + b, 2 * c + d)];
                    let (r, s) = match subsystem {
                        Subsystem::First => (2 * c + b, 2 * a + d),
                        Subsystem::Second => (2 * a + d, 2 * c + b),
                    };
                    out[(r, s)] = v;
                }
            }
        }
    }
    Ok(out)
}

/// Eigen-decomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `k` is the eigenvector of `values[k]`.
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn reconstruct(&self) -> CMatrix {
        let lambda = CMatrix::diag(&self.values);
        &(&self.vectors * &lambda) * &self.vectors.adjoint()
    }
}

pub fn hermitian_eigenvalues(h: &CMatrix) -> Result<Vec<f64>> {
    Ok(hermitian_eigen(h)?.values)
}

/// Cyclic complex Jacobi eigensolver.
pub fn hermitian_eigen(h: &CMatrix) -> Result<HermitianEigen> {
    if !h.is_square() {
        return Err(Error::invalid("eigensolver expects a square matrix"));
    }
    if !h.is_hermitian(EPS_HERM) {
        return Err(Error::invalid(format!(
            "matrix is not Hermitian (max deviation {:.3e})",
            h.max_abs_diff(&h.adjoint())
        )));
    }
    let n = h.rows;
    let mut a = h.hermitian_part();
    let mut v = CMatrix::identity(n);
    let threshold = EPS_EIG * a.frobenius_norm().max(1.0);

    for _ in 0..MAX_JACOBI_SWEEPS {
        if off_diagonal_norm(&a) < threshold {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let g = apq.norm();
                if g < 1e-300 {
                    continue;
                }
                let phase = apq / g;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let theta = 0.5 * (2.0 * g).atan2(aqq - app);
                let (s, c) = theta.sin_cos();
                // U = D R with D = diag(1, conj(phase)) on the (p, q) plane.
                let u00 = C64::new(c, 0.0);
                let u01 = C64::new(s, 0.0);
                let u10 = phase.conj() * -s;
                let u11 = phase.conj() * c;
                rotate(&mut a, &mut v, p, q, [u00, u01, u10, u11]);
            }
        }
    }
    if off_diagonal_norm(&a) >= threshold {
        return Err(Error::InvalidState("Jacobi iteration did not converge".into()));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[(row, col)] = v[(row, src)];
        }
    }
    Ok(HermitianEigen { values, vectors })
}

fn off_diagonal_norm(a: &CMatrix) -> f64 {
    let n = a.rows;
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += a[(i, j)].norm_sqr();
            }
        }
    }
    acc.sqrt()
}

/// `a <- U^† a U` and `v <- v U` where `U` acts on the `(p, q)` plane.
fn rotate(a: &mut CMatrix, v: &mut CMatrix, p: usize, q: usize, u: [C64; 4]) {
    let [u00, u01, u10, u11] = u;
    let n = a.rows;
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * u00 + akq * u10;
        a[(k, q)] = akp * u01 + akq * u11;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = u00.conj() * apk + u10.conj() * aqk;
        a[(q, k)] = u01.conj() * apk + u11.conj() * aqk;
    }
    a[(p, q)] = ZERO;
    a[(q, p)] = ZERO;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * u00 + vkq * u10;
        v[(k, q)] = vkp * u01 + vkq * u11;
    }
}

/// Preparation states sent as challenges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StateLabel {
    H,
    V,
    D,
    R,
}

impl StateLabel {
    pub const ALL: [StateLabel; 4] = [StateLabel::H, StateLabel::V, StateLabel::D, StateLabel::R];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn ket(self) -> CMatrix {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let amps = match self {
            StateLabel::H => [ONE, ZERO],
            StateLabel::V => [ZERO, ONE],
            StateLabel::D => [C64::new(h, 0.0), C64::new(h, 0.0)],
            StateLabel::R => [C64::new(h, 0.0), C64::new(0.0, h)],
        };
        CMatrix::ket(&amps)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StateLabel::H => "H",
            StateLabel::V => "V",
            StateLabel::D => "D",
            StateLabel::R => "R",
        }
    }
}

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StateLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "H" => Ok(StateLabel::H),
            "V" => Ok(StateLabel::V),
            "D" => Ok(StateLabel::D),
            "R" => Ok(StateLabel::R),
            other => Err(Error::invalid(format!("unknown state label {other:?}"))),
        }
    }
}

/// `|x><x|` for a preparation label.
/// Built entrywise so every entry is exactly representable.
pub fn prepared_state(x: StateLabel) -> CMatrix {
    let half = C64::new(0.5, 0.0);
    let ih = C64::new(0.0, 0.5);
    match x {
        StateLabel::H => CMatrix::diag(&[1.0, 0.0]),
        StateLabel::V => CMatrix::diag(&[0.0, 1.0]),
        StateLabel::D => CMatrix::from_rows(&[[half, half], [half, half]]),
        StateLabel::R => CMatrix::from_rows(&[[half, -ih], [ih, half]]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BellLabel {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellLabel {
    pub fn ket(self) -> CMatrix {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let (a, b, c, d) = match self {
            BellLabel::PhiPlus => (h, 0.0, 0.0, h),
            BellLabel::PhiMinus => (h, 0.0, 0.0, -h),
            BellLabel::PsiPlus => (0.0, h, h, 0.0),
            BellLabel::PsiMinus => (0.0, h, -h, 0.0),
        };
        CMatrix::ket(&[a, b, c, d].map(|v| C64::new(v, 0.0)))
    }
}

impl FromStr for BellLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "Phi+" | "Φ+" => Ok(BellLabel::PhiPlus),
            "Phi-" | "Φ-" | "Φ−" => Ok(BellLabel::PhiMinus),
            "Psi+" | "Ψ+" => Ok(BellLabel::PsiPlus),
            "Psi-" | "Ψ-" | "Ψ−" => Ok(BellLabel::PsiMinus),
            other => Err(Error::invalid(format!("unknown Bell label {other:?}"))),
        }
    }
}

/// Built entrywise so every entry is exactly representable.
pub fn bell_state(label: BellLabel) -> CMatrix {
    let (i, j, sign) = match label {
        BellLabel::PhiPlus => (0, 3, 1.0),
        BellLabel::PhiMinus => (0, 3, -1.0),
        BellLabel::PsiPlus => (1, 2, 1.0),
        BellLabel::PsiMinus => (1, 2, -1.0),
    };
    let mut m = CMatrix::zeros(4, 4);
    m[(i, i)] = C64::new(0.5, 0.0);
    m[(j, j)] = C64::new(0.5, 0.0);
    m[(i, j)] = C64::new(0.5 * sign, 0.0);
    m[(j, i)] = C64::new(0.5 * sign, 0.0);
    m
}

pub fn sigma_x() -> CMatrix {
    CMatrix::from_real_rows(&[[0.0, 1.0], [1.0, 0.0]])
}

pub fn sigma_y() -> CMatrix {
    CMatrix::from_rows(&[[ZERO, -I], [I, ZERO]])
}

pub fn sigma_z() -> CMatrix {
    CMatrix::from_real_rows(&[[1.0, 0.0], [0.0, -1.0]])
}
